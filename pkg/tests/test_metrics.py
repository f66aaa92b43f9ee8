import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ssmhelm.errors import LengthMismatch
from ssmhelm.evaluation import ConfusionMatrix, confusion, metrics


def test_confusion_examples():
    assert confusion([1] * 5, [1] * 5) == ConfusionMatrix(tp=5)
    assert confusion([1, 1, 0, 0], [1, 0, 0, 1]) == ConfusionMatrix(1, 1, 1, 1)
    assert confusion([], []) == ConfusionMatrix()
    with pytest.raises(LengthMismatch):
        confusion([1, 0], [1])


def test_hand_arithmetic():
    m = metrics(ConfusionMatrix(tp=50, tn=40, fp=5, fn=5))
    assert m.accuracy == pytest.approx(0.9)
    assert m.precision == pytest.approx(50 / 55)
    assert m.recall == pytest.approx(50 / 55)
    assert m.f1 == pytest.approx(50 / 55)
    assert m.fpr == pytest.approx(5 / 45)
    assert m.degenerate == ()


def test_perfect():
    m = metrics(confusion([1, 0, 1, 0], [1, 0, 1, 0]))
    assert (m.accuracy, m.precision, m.recall, m.f1, m.tpr, m.fpr) == (1, 1, 1, 1, 1, 0)


def test_f1_is_harmonic_mean():
    p, r = 0.9963, 0.9983
    assert 2 * p * r / (p + r) == pytest.approx(0.9973, abs=5e-5)
    # a confusion matrix realising those rates gives the same F1
    m = metrics(ConfusionMatrix(tp=9963 * 9983, fp=9983 * 37, fn=9963 * 17, tn=1))
    assert m.precision == pytest.approx(p) and m.recall == pytest.approx(r)
    assert m.f1 == pytest.approx(0.9973, abs=5e-5)


def test_degenerate_flags():
    m = metrics(ConfusionMatrix(tn=10))
    assert m.precision == 0 and m.recall == 0 and m.f1 == 0
    assert set(m.degenerate) == {"precision", "recall", "f1"}
    m = metrics(ConfusionMatrix(tp=3))
    assert m.fpr == 0 and m.degenerate == ("fpr",)
    with pytest.raises(ValueError):
        metrics(ConfusionMatrix())


pairs = st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=200)


@given(pairs, st.randoms(use_true_random=False))
def test_permutation_invariance(rows, rnd):
    t, p = np.array(rows).T
    perm = list(range(len(rows)))
    rnd.shuffle(perm)
    assert metrics(confusion(t, p)) == metrics(confusion(t[perm], p[perm]))


@given(pairs)
def test_identities(rows):
    t, p = np.array(rows).T
    cm = confusion(t, p)
    m = metrics(cm)
    assert cm.total == len(rows)
    # identical in exact arithmetic; the two float evaluations may differ by an ulp
    assert abs(m.accuracy - (1 - (cm.fp + cm.fn) / cm.total)) <= 1e-15
    assert m.recall == m.tpr
    for name in ("accuracy", "precision", "recall", "f1", "fpr", "tpr"):
        assert 0.0 <= getattr(m, name) <= 1.0
    if m.precision + m.recall > 0:
        assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall))
