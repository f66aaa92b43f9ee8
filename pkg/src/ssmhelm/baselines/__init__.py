"""Isolation Forest and Robust Covariance baselines."""

import numpy as np

from .isolation_forest import (IsolationForest, ITree, build_itree, c_factor,
                               fit_forest, forest_score, path_length)
from .robust_covariance import RobustCov, c_step, fit_mcd, mahalanobis


def calibrate(scores_valid, p):
    """p-th percentile (linear interpolation) of validation scores."""
    scores_valid = np.asarray(scores_valid, dtype=float)
    if scores_valid.size == 0:
        raise ValueError("empty validation scores")
    return float(np.percentile(scores_valid, p, method="linear"))


def baseline_predict(detector, X_test, threshold=None):
    """1 where the detector's score exceeds ``threshold`` (its stored one by default)."""
    if threshold is None:
        threshold = (detector.score_threshold if isinstance(detector, IsolationForest)
                     else detector.dist_threshold)
    return (detector.score(X_test) > threshold).astype(np.int8)


__all__ = [
    "IsolationForest", "ITree", "RobustCov", "baseline_predict", "build_itree",
    "c_factor", "c_step", "calibrate", "fit_forest", "fit_mcd", "forest_score",
    "mahalanobis", "path_length",
]
