"""Hierarchical extreme learning machine for one-class anomaly detection.

Pipeline, fitted on normal rows only:

1. z-score the inputs with training statistics;
2. stack ELM autoencoder layers. Each layer draws frozen random weights
   ``W`` (L x d) and biases ``b`` from U[-1, 1], computes ``H = g(X W^T + b)``
   and solves the ridge problem ``H beta ~ X`` for the reconstruction weights.
   ``H`` is what the next layer sees;
3. fit a one-class ELM whose target is 1 for every training row;
4. set ``tau = gamma * percentile_p(|1 - y|)`` on a held-out normal
   validation set.

A sample is abnormal when ``|1 - y| > tau``; the boundary counts as normal.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from . import io
from .errors import (DimensionMismatch, DisjointnessViolation, EmptyValidation,
                     NumericalFailure)

ACTIVATIONS = {
    "sigmoid": lambda z: 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500))),
    "tanh": np.tanh,
    "relu": lambda z: np.maximum(z, 0.0),
}


def solve_beta(H, T, C):
    """Ridge solution of ``min ||H beta - T||^2 + ||beta||^2 / C``.

    Computed from the thin SVD of ``H`` so that it stays well defined for
    ``N < L`` and for ill-conditioned activations. ``C = inf`` gives the
    minimum-norm least-squares (pseudo-inverse) solution.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    H = np.asarray(H, dtype=float)
    T = np.asarray(T, dtype=float)
    squeeze = T.ndim == 1
    if squeeze:
        T = T[:, None]
    try:
        U, s, Vt = scipy.linalg.svd(H, full_matrices=False, lapack_driver="gesdd")
    except (np.linalg.LinAlgError, ValueError):
        try:
            U, s, Vt = scipy.linalg.svd(H, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    if math.isinf(C):
        cutoff = s.max(initial=0.0) * max(H.shape) * np.finfo(float).eps
        filt = np.divide(1.0, s, out=np.zeros_like(s), where=s > cutoff)
    else:
        filt = s / (s * s + 1.0 / C)
    beta = Vt.T @ (filt[:, None] * (U.T @ T))
    return beta[:, 0] if squeeze else beta


def ridge_objective(H, T, beta, C):
    r = H @ beta - T
    return float(np.sum(r * r) + np.sum(beta * beta) / C)


def ridge_gradient(H, T, beta, C):
    return 2.0 * H.T @ (H @ beta - T) + 2.0 * beta / C


@dataclass
class ElmLayer:
    W: np.ndarray
    b: np.ndarray
    beta: np.ndarray
    activation: str = "sigmoid"

    @property
    def width(self):
        return self.W.shape[0]

    @property
    def n_inputs(self):
        return self.W.shape[1]

    def hidden(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise DimensionMismatch(f"layer expects {self.n_inputs} inputs, got shape {X.shape}")
        return ACTIVATIONS[self.activation](X @ self.W.T + self.b)

    def output(self, X):
        return self.hidden(X) @ self.beta

    def to_json(self):
        return {"W": io.encode_array(self.W), "b": io.encode_array(self.b),
                "beta": io.encode_array(self.beta), "activation": self.activation}

    @classmethod
    def from_json(cls, obj):
        return cls(io.decode_array(obj["W"]), io.decode_array(obj["b"]),
                   io.decode_array(obj["beta"]), obj["activation"])


def _random_layer(d, width, activation, rng):
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    W = rng.uniform(-1.0, 1.0, size=(width, d))
    b = rng.uniform(-1.0, 1.0, size=width)
    return W, b


def fit_autoencoder_layer(X, width, activation="sigmoid", C=1e6, rng=None):
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("autoencoder layer needs at least two rows")
    rng = np.random.default_rng() if rng is None else rng
    W, b = _random_layer(X.shape[1], width, activation, rng)
    layer = ElmLayer(W, b, np.zeros((width, X.shape[1])), activation)
    layer.beta = solve_beta(layer.hidden(X), X, C)
    return layer


def reconstruction_error(layer, X):
    """Mean squared reconstruction error of an autoencoder layer on X."""
    X = np.asarray(X, dtype=float)
    return float(np.mean((layer.output(X) - X) ** 2))


def encode(encoder, X):
    Z = np.asarray(X, dtype=float)
    for layer in encoder:
        Z = layer.hidden(Z)
    return Z


def fit_one_class(Z, width, activation="sigmoid", C=1e6, rng=None):
    Z = np.asarray(Z, dtype=float)
    if Z.shape[0] < 2:
        raise ValueError("one-class classifier needs at least two rows")
    rng = np.random.default_rng() if rng is None else rng
    W, b = _random_layer(Z.shape[1], width, activation, rng)
    layer = ElmLayer(W, b, np.zeros((width, 1)), activation)
    layer.beta = solve_beta(layer.hidden(Z), np.ones((Z.shape[0], 1)), C)
    return layer


def threshold_from_deviations(deviations, p, gamma):
    deviations = np.asarray(deviations, dtype=float)
    if deviations.size == 0:
        raise EmptyValidation("validation set is empty")
    if not 0 <= p <= 100:
        raise ValueError("p must lie in [0, 100]")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return float(gamma * np.percentile(deviations, p, method="linear"))


@dataclass
class HelmHyper:
    widths: tuple = (64, 64)
    classifier_width: int = 1000
    C: float = 1e6
    p: float = 99.0
    gamma: float = 1.5
    activation: str = "sigmoid"
    seed: int = 0

    def validate(self):
        if not self.widths or any(int(w) < 1 for w in self.widths):
            raise ValueError("encoder needs at least one layer of positive width")
        if int(self.classifier_width) < 1:
            raise ValueError("classifier_width must be positive")
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not 0 <= self.p <= 100:
            raise ValueError("p must lie in [0, 100]")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        return self


@dataclass
class Scores:
    y: np.ndarray
    deviation: np.ndarray
    abnormal: np.ndarray

    def __len__(self):
        return len(self.y)


@dataclass
class HelmModel:
    mean: np.ndarray
    std: np.ndarray
    encoder: list
    classifier: ElmLayer
    tau: float = 0.0
    hyper: HelmHyper = field(default_factory=HelmHyper)
    valid_deviations: np.ndarray = field(default_factory=lambda: np.empty(0))

    def normalize(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.mean):
            raise DimensionMismatch(f"model expects {len(self.mean)} features, got shape {X.shape}")
        return (X - self.mean) / self.std

    def raw_output(self, X):
        return self.classifier.output(encode(self.encoder, self.normalize(X)))[:, 0]

    def deviation(self, X):
        return np.abs(1.0 - self.raw_output(X))

    def calibrate(self, X_valid, p=None, gamma=None):
        p = self.hyper.p if p is None else p
        gamma = self.hyper.gamma if gamma is None else gamma
        X_valid = np.asarray(X_valid, dtype=float)
        if X_valid.shape[0] == 0:
            raise EmptyValidation("validation set is empty")
        self.valid_deviations = self.deviation(X_valid)
        self.tau = threshold_from_deviations(self.valid_deviations, p, gamma)
        return self.tau

    def predict(self, X):
        y = self.raw_output(X)
        dev = np.abs(1.0 - y)
        return Scores(y, dev, (dev > self.tau).astype(np.int8))

    def to_json(self):
        hyper = asdict(self.hyper)
        hyper["widths"] = list(self.hyper.widths)
        return {
            "hyper": hyper,
            "norm": {"mean": io.encode_array(self.mean), "std": io.encode_array(self.std)},
            "layers": [layer.to_json() for layer in self.encoder],
            "classifier": self.classifier.to_json(),
            "tau": self.tau,
            "valid_deviations": io.encode_array(self.valid_deviations),
        }

    @classmethod
    def from_json(cls, obj):
        hyper = dict(obj["hyper"])
        hyper["widths"] = tuple(hyper["widths"])
        return cls(
            mean=io.decode_array(obj["norm"]["mean"]),
            std=io.decode_array(obj["norm"]["std"]),
            encoder=[ElmLayer.from_json(o) for o in obj["layers"]],
            classifier=ElmLayer.from_json(obj["classifier"]),
            tau=float(obj["tau"]),
            hyper=HelmHyper(**hyper),
            valid_deviations=io.decode_array(obj["valid_deviations"]),
        )

    def dumps(self):
        return io.dumps_envelope("helm", self.to_json())

    @classmethod
    def loads(cls, text):
        _, payload = io.loads_envelope(text, "helm")
        return cls.from_json(payload)


def calibrate_threshold(model, X_valid, p, gamma):
    return model.calibrate(X_valid, p, gamma)


def predict(model, X_test):
    return model.predict(X_test)


def _check_disjoint(X_train, X_valid, train_index, valid_index):
    if train_index is not None and valid_index is not None:
        if np.intersect1d(train_index, valid_index).size:
            raise DisjointnessViolation("training and validation indices overlap")
        return
    train_rows = {row.tobytes() for row in np.ascontiguousarray(X_train)}
    if any(row.tobytes() in train_rows for row in np.ascontiguousarray(X_valid)):
        raise DisjointnessViolation("a validation row also appears in the training set")


def fit_pipeline(X_train, X_valid, hyper=None, train_index=None, valid_index=None):
    """Fit normalisation, encoder and one-class classifier, then calibrate tau.

    Both inputs must hold normal rows only. When row indices are given they
    are used for the disjointness check, otherwise identical rows are.
    """
    hyper = (hyper or HelmHyper()).validate()
    X_train = np.asarray(X_train, dtype=float)
    X_valid = np.asarray(X_valid, dtype=float)
    if X_valid.shape[0] == 0:
        raise EmptyValidation("validation set is empty")
    if X_train.shape[1] != X_valid.shape[1]:
        raise DimensionMismatch("training and validation feature counts differ")
    _check_disjoint(X_train, X_valid, train_index, valid_index)

    rng = np.random.default_rng(hyper.seed)
    mean = X_train.mean(axis=0)
    std = X_train.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Z = (X_train - mean) / std
    encoder = []
    for width in hyper.widths:
        layer = fit_autoencoder_layer(Z, int(width), hyper.activation, hyper.C, rng)
        encoder.append(layer)
        Z = layer.hidden(Z)
    clf = fit_one_class(Z, int(hyper.classifier_width), hyper.activation, hyper.C, rng)
    model = HelmModel(mean, std, encoder, clf, hyper=hyper)
    model.calibrate(X_valid)
    return model
