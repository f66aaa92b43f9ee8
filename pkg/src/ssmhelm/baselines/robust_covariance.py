"""Minimum covariance determinant (FastMCD) location/scatter and Mahalanobis scoring."""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import stats

from .. import io
from ..errors import SingularCovariance

log = logging.getLogger(__name__)


def _cholesky(sigma):
    try:
        return scipy.linalg.cholesky(sigma, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularCovariance(f"covariance is not positive definite: {exc}") from exc


def mahalanobis_sq(X, mu, sigma, chol=None):
    L = _cholesky(sigma) if chol is None else chol
    Z = scipy.linalg.solve_triangular(L, (np.atleast_2d(X) - mu).T, lower=True)
    return np.sum(Z * Z, axis=0)


@dataclass
class RobustCov:
    mu: np.ndarray
    sigma: np.ndarray
    h: int
    dist_threshold: float = np.inf
    support: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    det_history: list = field(default_factory=list)

    def score(self, X):
        return np.sqrt(mahalanobis_sq(X, self.mu, self.sigma))

    def to_json(self):
        return {"mu": io.encode_array(self.mu), "sigma": io.encode_array(self.sigma),
                "h": self.h, "dist_threshold": self.dist_threshold}

    @classmethod
    def from_json(cls, obj):
        return cls(io.decode_array(obj["mu"]), io.decode_array(obj["sigma"]),
                   int(obj["h"]), float(obj["dist_threshold"]))

    def dumps(self):
        return io.dumps_envelope("robust_covariance", self.to_json())

    @classmethod
    def loads(cls, text):
        _, payload = io.loads_envelope(text, "robust_covariance")
        return cls.from_json(payload)


def mahalanobis(rc, x):
    """Distance of ``x`` (one point or a batch) from ``rc``'s center."""
    x = np.asarray(x, dtype=float)
    d = np.sqrt(mahalanobis_sq(x, rc.mu, rc.sigma))
    return float(d[0]) if x.ndim == 1 else d


def _estimate(X):
    mu = X.mean(axis=0)
    sigma = np.cov(X, rowvar=False, ddof=1)
    return mu, np.atleast_2d(sigma)


def _logdet(sigma):
    sign, logdet = np.linalg.slogdet(sigma)
    return logdet if sign > 0 else -np.inf


def c_step(X, mu, sigma, h):
    """Keep the ``h`` rows closest under (mu, sigma) and refit on them."""
    d2 = mahalanobis_sq(X, mu, sigma)
    # sorted, so refitting the same subset reproduces the determinant bit for bit
    keep = np.sort(np.argpartition(d2, h - 1)[:h])
    mu, sigma = _estimate(X[keep])
    return mu, sigma, keep


def _initial(X, p, rng, retries):
    n = X.shape[0]
    for _ in range(retries):
        subset = rng.choice(n, size=p + 1, replace=False)
        mu, sigma = _estimate(X[subset])
        if np.isfinite(_logdet(sigma)):
            return mu, sigma
    raise SingularCovariance(f"no non-singular ({p}+1)-subset after {retries} draws")


def fit_mcd(X, h=None, k_starts=500, m_keep=10, seed=0, max_iter=100, retries=50,
            consistency=True, reweight=False):
    """FastMCD estimate of location and scatter.

    ``k_starts`` random (p+1)-subsets each get two C-steps; the ``m_keep``
    lowest-determinant candidates are iterated until the determinant stops
    decreasing, and the overall minimum is returned. Unless ``h == n``, the
    scatter is rescaled by ``median(d^2) / chi2_p.median`` for consistency at
    the normal model. ``det_history`` records each refined candidate's
    log-determinant sequence.

    ``reweight`` adds the usual one-step refinement: refit on the rows with
    ``d^2 <= chi2_p(0.975)`` and rescale again. Off by default; the raw
    estimate has low efficiency (about 0.07 sigma location spread at n=1000,
    p=3) but is what the benchmark uses.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n <= p + 1:
        raise ValueError(f"need more than p + 1 = {p + 1} rows, got {n}")
    h_min = (n + p + 1) // 2
    h = h_min if h is None else int(h)
    if not h_min <= h <= n:
        raise ValueError(f"h must lie in [{h_min}, {n}]")

    if h == n:
        mu, sigma = _estimate(X)
        if not np.isfinite(_logdet(sigma)):
            raise SingularCovariance("sample covariance is singular")
        return RobustCov(mu, sigma, h, support=np.ones(n, dtype=bool),
                         det_history=[[_logdet(sigma)]])

    rng = np.random.default_rng(seed)
    candidates = []
    for _ in range(k_starts):
        mu, sigma = _initial(X, p, rng, retries)
        # the (p+1)-subset start is not an h-subset, so the determinant
        # sequence is only monotone from the first C-step on
        try:
            hist = []
            for _ in range(2):
                mu, sigma, keep = c_step(X, mu, sigma, h)
                hist.append(_logdet(sigma))
        except SingularCovariance:
            continue
        if np.isfinite(hist[-1]):
            candidates.append((hist[-1], mu, sigma, keep, hist))
    if not candidates:
        raise SingularCovariance("every start collapsed to a singular subset")
    candidates.sort(key=lambda c: c[0])

    best = None
    histories = []
    for logdet, mu, sigma, keep, hist in candidates[:m_keep]:
        hist = list(hist)
        for _ in range(max_iter):
            try:
                new_mu, new_sigma, new_keep = c_step(X, mu, sigma, h)
            except SingularCovariance:
                break
            new_logdet = _logdet(new_sigma)
            if not np.isfinite(new_logdet):
                raise SingularCovariance("C-step reached an exact fit (zero determinant)")
            if new_logdet >= logdet or np.array_equal(new_keep, keep):
                if new_logdet <= logdet:
                    hist.append(new_logdet)
                break
            mu, sigma, keep, logdet = new_mu, new_sigma, new_keep, new_logdet
            hist.append(logdet)
        histories.append(hist)
        if best is None or logdet < best[0]:
            best = (logdet, mu, sigma, keep)

    _, mu, sigma, keep = best
    if consistency:
        d2 = mahalanobis_sq(X, mu, sigma)
        sigma = sigma * (np.median(d2) / stats.chi2.ppf(0.5, p))
    support = np.zeros(n, dtype=bool)
    support[keep] = True
    if reweight:
        d2 = mahalanobis_sq(X, mu, sigma)
        inlier = d2 <= stats.chi2.ppf(0.975, p)
        if inlier.sum() > p + 1:
            mu, sigma = _estimate(X[inlier])
            d2 = mahalanobis_sq(X, mu, sigma)
            sigma = sigma * (np.median(d2) / stats.chi2.ppf(0.5, p))
            support = inlier
    log.debug("fit_mcd: n=%d p=%d h=%d best logdet=%.4f", n, p, h, best[0])
    return RobustCov(mu, sigma, h, support=support, det_history=histories)
