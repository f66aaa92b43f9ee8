"""Isolation forest on normal-only training data.

Trees are stored as flat arrays so that scoring walks all samples through a
tree level by level instead of recursing per sample.
"""

import math
from dataclasses import dataclass

import numpy as np

from .. import io
from ..errors import DimensionMismatch

EULER_GAMMA = 0.5772156649


def harmonic(i):
    return math.log(i) + EULER_GAMMA


def c_factor(n):
    """Average path length of an unsuccessful BST search among ``n`` points."""
    n = np.asarray(n, dtype=float)
    out = np.zeros_like(n)
    big = n > 1
    m = n[big]
    out[big] = 2.0 * (np.log(m - 1.0) + EULER_GAMMA) - 2.0 * (m - 1.0) / m
    return out if out.ndim else float(out)


@dataclass
class ITree:
    feature: np.ndarray      # -1 marks a leaf
    value: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray
    height_limit: int
    n_features: int

    @property
    def n_nodes(self):
        return len(self.feature)

    def leaves(self):
        return np.flatnonzero(self.feature < 0)

    def to_json(self):
        return {
            "nodes": np.column_stack((self.feature, self.value, self.left, self.right,
                                      self.size, self.depth)).tolist(),
            "height_limit": self.height_limit,
            "n_features": self.n_features,
        }

    @classmethod
    def from_json(cls, obj):
        nodes = np.asarray(obj["nodes"], dtype=float).reshape(-1, 6)
        as_int = lambda col: nodes[:, col].astype(np.int64)
        return cls(as_int(0), nodes[:, 1].copy(), as_int(2), as_int(3), as_int(4), as_int(5),
                   int(obj["height_limit"]), int(obj["n_features"]))


def build_itree(sample, rng, height_limit):
    """Grow one isolation tree on ``sample`` (n x d, n >= 1).

    Each internal node picks a feature uniformly among those that are not
    constant in its partition and a split value uniformly in that feature's
    [min, max). Points with ``x < value`` go left. Growth stops at
    ``height_limit``, at singletons and at all-duplicate partitions.
    """
    sample = np.asarray(sample, dtype=float)
    if sample.ndim != 2 or sample.shape[0] < 1:
        raise ValueError("sample must be a non-empty 2-D array")
    feature, value, left, right, size, depth = [], [], [], [], [], []

    def new_node(n, d):
        for lst, v in ((feature, -1), (value, 0.0), (left, -1), (right, -1), (size, n), (depth, d)):
            lst.append(v)
        return len(feature) - 1

    root = new_node(sample.shape[0], 0)
    stack = [(root, np.arange(sample.shape[0]))]
    while stack:
        node, idx = stack.pop()
        d = depth[node]
        if d >= height_limit or len(idx) <= 1:
            continue
        part = sample[idx]
        lo = part.min(axis=0)
        hi = part.max(axis=0)
        candidates = np.flatnonzero(hi > lo)
        if candidates.size == 0:
            continue
        q = int(candidates[rng.integers(candidates.size)])
        split = rng.uniform(lo[q], hi[q])
        while split <= lo[q]:
            split = rng.uniform(lo[q], hi[q])
        go_left = part[:, q] < split
        feature[node] = q
        value[node] = split
        li = new_node(int(go_left.sum()), d + 1)
        ri = new_node(int((~go_left).sum()), d + 1)
        left[node] = li
        right[node] = ri
        stack.append((ri, idx[~go_left]))
        stack.append((li, idx[go_left]))
    return ITree(np.array(feature, dtype=np.int64), np.array(value, dtype=float),
                 np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                 np.array(size, dtype=np.int64), np.array(depth, dtype=np.int64),
                 int(height_limit), sample.shape[1])


def path_length(tree, X):
    """Depth of the leaf each row of ``X`` lands in, plus ``c(leaf size)``.

    Accepts a single point (1-D) or a batch (2-D); returns a float or an array.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != tree.n_features:
        raise DimensionMismatch(f"tree expects {tree.n_features} features, got {X.shape[1]}")
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = tree.feature[node] >= 0
    rows = np.arange(X.shape[0])
    while active.any():
        r = rows[active]
        nd = node[r]
        f = tree.feature[nd]
        go_left = X[r, f] < tree.value[nd]
        node[r] = np.where(go_left, tree.left[nd], tree.right[nd])
        active[r] = tree.feature[node[r]] >= 0
    h = tree.depth[node] + c_factor(tree.size[node])
    return float(h[0]) if single else h


@dataclass
class IsolationForest:
    trees: list
    psi: int
    score_threshold: float = 0.5

    @property
    def t(self):
        return len(self.trees)

    def mean_path_length(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += path_length(tree, X)
        return total / len(self.trees)

    def score(self, X):
        return 2.0 ** (-self.mean_path_length(X) / c_factor(self.psi))

    def to_json(self):
        return {"psi": self.psi, "score_threshold": self.score_threshold,
                "trees": [t.to_json() for t in self.trees]}

    @classmethod
    def from_json(cls, obj):
        return cls([ITree.from_json(t) for t in obj["trees"]], int(obj["psi"]),
                   float(obj["score_threshold"]))

    def dumps(self):
        return io.dumps_envelope("isolation_forest", self.to_json())

    @classmethod
    def loads(cls, text):
        _, payload = io.loads_envelope(text, "isolation_forest")
        return cls.from_json(payload)


def fit_forest(X, seed=0, psi=256, t=100, height_limit=None):
    """Grow ``t`` trees on subsamples of size ``min(psi, n)`` drawn without replacement.

    Every tree gets its own generator spawned from ``seed``.
    """
    X = np.asarray(X, dtype=float)
    if t < 1:
        raise ValueError("t must be >= 1")
    n = X.shape[0]
    psi = min(int(psi), n)
    if psi < 2:
        raise ValueError("need at least two training rows")
    if height_limit is None:
        height_limit = math.ceil(math.log2(psi))
    trees = []
    for child in np.random.SeedSequence(seed).spawn(t):
        rng = np.random.default_rng(child)
        idx = rng.choice(n, size=psi, replace=False)
        trees.append(build_itree(X[idx], rng, height_limit))
    return IsolationForest(trees, psi)


def forest_score(forest, X):
    return forest.score(X)
