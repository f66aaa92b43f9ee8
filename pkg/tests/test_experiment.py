import numpy as np
import pytest

from ssmhelm.evaluation import (MODELS, SETTING_NAMES, BaselineHyper, derive_seed, fit_detector,
                                load_detector, run_setting, sample_examined, split_rows)
from ssmhelm.helm import HelmHyper

from conftest import SMALL_BASE, SMALL_HELM


def test_grid_shape(grid):
    assert len(grid) == 9
    assert {r.key()[:2] for r in grid} == {(m, s) for m in MODELS for s in SETTING_NAMES}
    assert len({r.key() for r in grid}) == 9


def test_every_run_scores_the_same_test_rows(grid, bundle):
    for run in grid:
        np.testing.assert_array_equal(run.index, bundle.split.test)
        np.testing.assert_array_equal(run.truth, bundle.abnormal[run.index])
        assert run.confusion.total == len(run.index)
        assert run.metrics.recall == run.metrics.tpr


def test_same_seed_same_metrics(bundle):
    kw = dict(helm_hyper=HelmHyper(**SMALL_HELM), base_hyper=BaselineHyper(**SMALL_BASE))
    for model in MODELS:
        a = run_setting(bundle, model, "S3", seed=4, **kw)
        b = run_setting(bundle, model, "S3", seed=4, **kw)
        assert a.metrics == b.metrics
        np.testing.assert_array_equal(a.score, b.score)


def test_derive_seed():
    seeds = {derive_seed(0, m, s) for m in MODELS for s in SETTING_NAMES}
    assert len(seeds) == 9
    assert derive_seed(5, "HELM", "S2") == derive_seed(5, "HELM", "S2")
    assert derive_seed(5, "HELM", "S2") != derive_seed(6, "HELM", "S2")


def test_split_has_no_abnormal_training_rows(bundle):
    split, ab = bundle.split, bundle.abnormal
    assert not ab[split.train_normal].any() and not ab[split.valid_normal].any()
    assert ab[split.test_abnormal].all()


def test_sample_examined():
    ab = np.zeros(1000, dtype=bool)
    ab[::10] = True
    rows = sample_examined(ab, 2.0, seed=1)
    assert ab[rows].sum() == 100 and (~ab[rows]).sum() == 200
    np.testing.assert_array_equal(rows, np.sort(rows))
    np.testing.assert_array_equal(rows, sample_examined(ab, 2.0, seed=1))


def test_split_rows_subset():
    ab = np.zeros(50, dtype=bool)
    ab[[3, 7, 41]] = True
    rows = np.arange(0, 50, 2)
    split = split_rows(ab, 4, seed=0, rows=np.r_[rows, 3, 7])
    assert set(split.test_abnormal) == {3, 7}
    used = np.concatenate((split.train_normal, split.valid_normal, split.test))
    assert set(used) <= set(rows) | {3, 7}


@pytest.mark.parametrize("model", MODELS)
def test_detector_round_trip(model, bundle):
    X_train, _ = bundle.rows("S2", "train")
    X_valid, _ = bundle.rows("S2", "valid")
    X_test, _ = bundle.rows("S2", "test")
    scorer, thr, fitted = fit_detector(model, X_train, X_valid, 3, HelmHyper(**SMALL_HELM),
                                       BaselineHyper(**SMALL_BASE))
    scorer2, thr2, _ = load_detector(model, fitted.dumps())
    assert thr == thr2
    np.testing.assert_array_equal(scorer(X_test), scorer2(X_test))


def test_unknown_model():
    with pytest.raises(ValueError):
        fit_detector("SVM", np.zeros((5, 2)), np.zeros((5, 2)), 0)
    with pytest.raises(ValueError):
        load_detector("SVM", "{}")
