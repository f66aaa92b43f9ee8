"""Three models x three feature settings on one labeled split.

Every detector is fitted on training normals, calibrated at the p-th
percentile of its validation-normal scores, and evaluated on the test rows.
"""

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import helm as helm_mod
from ..baselines import IsolationForest, RobustCov, calibrate, fit_forest, fit_mcd
from ..features import SETTINGS, assemble, compute_features
from ..labeler import SplitSpec, label_table, make_split
from .metrics import ConfusionMatrix, MetricSet, confusion, metrics
from .synth import SynthSpec, synth_generate

log = logging.getLogger(__name__)

MODELS = ("HELM", "IsolationForest", "RobustCovariance")
SETTING_NAMES = ("S1", "S2", "S3")
REFERENCE_TEST_RATIO = 3638 / 11480   # normal test rows per abnormal row
REFERENCE_NORMAL_RATIO = 12125 / 11480  # examined normal rows per abnormal row


@dataclass
class BaselineHyper:
    p: float = 99.0
    psi: int = 256
    n_trees: int = 100
    k_starts: int = 500
    m_keep: int = 10


@dataclass
class DataBundle:
    """Feature matrices per setting, labels and a fixed split."""
    matrices: dict        # setting -> FeatureMatrix
    abnormal: np.ndarray
    split: object         # SplitSpec
    table: object = None
    feats: dict = None
    labels: object = None
    truth: dict = None

    def rows(self, setting, part):
        X = self.matrices[setting].values
        if part == "test":
            idx = self.split.test
        else:
            idx = getattr(self.split, f"{part}_normal")
        return X[idx], idx


@dataclass
class ExperimentRun:
    model: str
    setting: str
    seed: int
    metrics: MetricSet
    confusion: ConfusionMatrix
    threshold: float
    score: np.ndarray          # raw score (HELM deviation, IF score, RC distance)
    score_ratio: np.ndarray    # score / threshold
    truth: np.ndarray
    predicted: np.ndarray
    index: np.ndarray          # row indices of the test set
    seconds: float = 0.0

    def key(self):
        return (self.model, self.setting, self.seed)


def derive_seed(master_seed, model, setting):
    """Per-run seed from the master seed; independent of run order."""
    m = MODELS.index(model) if model in MODELS else sum(map(ord, model))
    s = SETTING_NAMES.index(setting) if setting in SETTING_NAMES else sum(map(ord, setting))
    ss = np.random.SeedSequence(master_seed, spawn_key=(m, s))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def fit_detector(model, X_train, X_valid, seed, helm_hyper=None, base_hyper=None,
                 train_index=None, valid_index=None):
    """Fit and calibrate one detector. Returns ``(scorer, threshold, fitted)``."""
    base_hyper = base_hyper or BaselineHyper()
    if model == "HELM":
        hyper = helm_hyper or helm_mod.HelmHyper()
        hyper = helm_mod.HelmHyper(**{**asdict(hyper), "seed": seed})
        fitted = helm_mod.fit_pipeline(X_train, X_valid, hyper, train_index, valid_index)
        return fitted.deviation, fitted.tau, fitted
    if model == "IsolationForest":
        fitted = fit_forest(X_train, seed=seed, psi=base_hyper.psi, t=base_hyper.n_trees)
        fitted.score_threshold = calibrate(fitted.score(X_valid), base_hyper.p)
        return fitted.score, fitted.score_threshold, fitted
    if model == "RobustCovariance":
        fitted = fit_mcd(X_train, k_starts=base_hyper.k_starts, m_keep=base_hyper.m_keep, seed=seed)
        fitted.dist_threshold = calibrate(fitted.score(X_valid), base_hyper.p)
        return fitted.score, fitted.dist_threshold, fitted
    raise ValueError(f"unknown model {model!r}")


def load_detector(model, text):
    """Inverse of ``fitted.dumps()``. Returns ``(scorer, threshold, fitted)``."""
    if model == "HELM":
        fitted = helm_mod.HelmModel.loads(text)
        return fitted.deviation, fitted.tau, fitted
    if model == "IsolationForest":
        fitted = IsolationForest.loads(text)
        return fitted.score, fitted.score_threshold, fitted
    if model == "RobustCovariance":
        fitted = RobustCov.loads(text)
        return fitted.score, fitted.dist_threshold, fitted
    raise ValueError(f"unknown model {model!r}")


def make_run(model, setting, seed, score, threshold, truth, index, seconds=0.0):
    """ExperimentRun from test scores and the calibrated threshold."""
    score = np.asarray(score, dtype=float)
    pred = score > threshold
    truth = np.asarray(truth).astype(bool)
    cm = confusion(truth, pred)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = score / threshold if threshold != 0 else np.where(score > 0, np.inf, 0.0)
    return ExperimentRun(model, setting, seed, metrics(cm), cm, float(threshold), score,
                         np.asarray(ratio, dtype=float), truth.astype(np.int8),
                         pred.astype(np.int8), np.asarray(index, dtype=np.int64), seconds)


def run_setting(bundle, model, setting, helm_hyper=None, base_hyper=None, seed=0):
    """Fit on train normals, calibrate on valid normals, evaluate on test."""
    start = time.perf_counter()
    X_train, i_train = bundle.rows(setting, "train")
    X_valid, i_valid = bundle.rows(setting, "valid")
    X_test, i_test = bundle.rows(setting, "test")
    scorer, threshold, _ = fit_detector(model, X_train, X_valid, seed, helm_hyper, base_hyper,
                                        i_train, i_valid)
    run = make_run(model, setting, seed, scorer(X_test), threshold, bundle.abnormal[i_test],
                   i_test, time.perf_counter() - start)
    log.info("%s %s seed=%d accuracy=%.4f (%.1fs)", model, setting, seed,
             run.metrics.accuracy, run.seconds)
    return run


def run_grid(bundle, master_seed=0, models=MODELS, settings=SETTING_NAMES,
             helm_hyper=None, base_hyper=None):
    """One run per (model, setting) with seeds derived from ``master_seed``."""
    return [run_setting(bundle, m, s, helm_hyper, base_hyper, derive_seed(master_seed, m, s))
            for m in models for s in settings]


# A long three-lane road with rare events: the examined set keeps every
# abnormal row and samples normals, so conflict partners stay a small
# fraction of the normal rows.
BENCHMARK_SYNTH = SynthSpec(vehicles_per_lane=4800, brake_rate=0.0015, rapid_lc_rate=0.005,
                            close_lc_rate=0.003)


@dataclass
class BenchmarkConfig:
    """Everything that defines the synthetic acceptance benchmark."""
    name: str = "synth-bench-v1"
    synth: SynthSpec = BENCHMARK_SYNTH
    data_seed: int = 7
    split_seed: int = 0
    master_seed: int = 0
    accel_floor: float = 2.0
    lane_window: int = 15
    radius: float = 50.0
    cap: float = 300.0
    ttc_encoding: str = "inverse"
    test_ratio: float = REFERENCE_TEST_RATIO
    normal_ratio: float = REFERENCE_NORMAL_RATIO
    sample_seed: int = 0
    valid_fraction: float = 0.2
    # same p99 calibration as the baselines
    helm: helm_mod.HelmHyper = field(default_factory=lambda: helm_mod.HelmHyper(gamma=1.0))
    baseline: BaselineHyper = field(default_factory=BaselineHyper)


def sample_examined(abnormal, normal_ratio, seed=0):
    """Every abnormal row plus ``round(normal_ratio * n_abnormal)`` random normal rows."""
    abnormal = np.asarray(abnormal, dtype=bool)
    normal = np.flatnonzero(~abnormal)
    n_normal = min(int(round(normal_ratio * abnormal.sum())), normal.size)
    picked = np.random.default_rng(seed).choice(normal, size=n_normal, replace=False)
    return np.sort(np.concatenate((np.flatnonzero(abnormal), picked)))


def split_rows(abnormal, normal_test_count, seed=0, valid_fraction=0.2, rows=None):
    """:func:`make_split` restricted to ``rows`` (all rows by default), in full-table indices."""
    abnormal = np.asarray(abnormal, dtype=bool)
    if rows is None:
        return make_split(abnormal, normal_test_count, seed, valid_fraction)
    rows = np.asarray(rows, dtype=np.int64)
    sub = make_split(abnormal[rows], normal_test_count, seed, valid_fraction)
    return SplitSpec(rows[sub.train_normal], rows[sub.valid_normal],
                     rows[sub.test_normal], rows[sub.test_abnormal], seed)


def build_bundle(table, feats, labels, normal_test_count, split_seed=0, valid_fraction=0.2,
                 cap=300.0, settings=None, truth=None, rows=None, ttc_encoding="clamp"):
    """Assemble every setting and split the labeled rows.

    ``rows`` restricts the split to a subset of row indices (all rows by default).
    """
    settings = settings or SETTINGS
    matrices = {name: assemble(table, feats, name, cap=cap, settings=settings,
                               ttc_encoding=ttc_encoding)
                for name in settings}
    abnormal = np.asarray(labels.abnormal, dtype=bool)
    split = split_rows(abnormal, normal_test_count, split_seed, valid_fraction, rows)
    return DataBundle(matrices, abnormal, split, table, feats, labels, truth)


def benchmark_bundle(config=None):
    config = config or BenchmarkConfig()
    result = synth_generate(config.synth, config.data_seed)
    feats = compute_features(result.table, radius=config.radius)
    labels = label_table(result.table, feats, accel_floor=config.accel_floor,
                         lane_window=config.lane_window)
    n_abn = int(np.sum(labels.abnormal))
    n_test = int(round(config.test_ratio * n_abn))
    # keep only the examined rows; the rest of the simulated pool is context
    rows = sample_examined(labels.abnormal, config.normal_ratio, config.sample_seed)
    table = result.table.take(rows)
    feats = {k: v[rows] for k, v in feats.items()}
    truth = {k: v[rows] for k, v in result.truth.items()}
    return build_bundle(table, feats, labels.take(rows), n_test, config.split_seed,
                        config.valid_fraction, config.cap, truth=truth,
                        ttc_encoding=config.ttc_encoding)


def run_benchmark(config=None):
    config = config or BenchmarkConfig()
    bundle = benchmark_bundle(config)
    return bundle, run_grid(bundle, config.master_seed, helm_hyper=config.helm,
                            base_hyper=config.baseline)
