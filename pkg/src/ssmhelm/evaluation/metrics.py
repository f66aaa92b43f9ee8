"""Confusion matrix and the six reported metrics. Abnormal is the positive class."""

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import LengthMismatch

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "fpr", "tpr")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    f1: float
    fpr: float
    tpr: float
    degenerate: tuple = field(default=())

    def as_dict(self):
        return {k: v for k, v in asdict(self).items() if k != "degenerate"}


def confusion(truth, pred):
    truth = np.asarray(truth).astype(bool)
    pred = np.asarray(pred).astype(bool)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"truth has {truth.size} entries, pred has {pred.size}")
    return ConfusionMatrix(
        tp=int(np.sum(truth & pred)),
        tn=int(np.sum(~truth & ~pred)),
        fp=int(np.sum(~truth & pred)),
        fn=int(np.sum(truth & ~pred)),
    )


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def metrics(cm):
    """Accuracy, precision, recall, F1, FPR and TPR of a confusion matrix.

    A metric whose denominator is zero is reported as 0 and its name is listed
    in ``degenerate``.
    """
    if cm.total <= 0:
        raise ValueError("empty confusion matrix")
    flags = []
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", flags)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", flags)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", flags)
    fpr = _ratio(cm.fp, cm.fp + cm.tn, "fpr", flags)
    return MetricSet(
        accuracy=(cm.tp + cm.tn) / cm.total,
        precision=precision,
        recall=recall,
        f1=f1,
        fpr=fpr,
        tpr=recall,
        degenerate=tuple(flags),
    )
