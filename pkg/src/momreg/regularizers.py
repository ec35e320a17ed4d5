"""Penalties: the l1 norm and the sorted-l1 (SLOPE) norm.

SLOPE weights ``beta`` must be positive and non-increasing; the norm is
``sum_i beta_i * |t|_(i)`` with ``|t|_(1) >= |t|_(2) >= ...``.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import ParameterError

PENALTY_KINDS = ("none", "l1", "slope")


def default_slope_weights(d, C=1.0):
    """``beta_j = C * sqrt(log(e * d / j))`` for ``j = 1..d``."""
    j = np.arange(1, d + 1)
    return C * np.sqrt(np.log(np.e * d / j))


def _check_weights(beta, d=None):
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or beta.size == 0:
        raise ParameterError("SLOPE weights must be a non-empty vector")
    if d is not None and beta.size != d:
        raise ParameterError(f"SLOPE weights have length {beta.size}, expected {d}")
    if np.any(beta <= 0) or np.any(np.diff(beta) > 0):
        raise ParameterError("SLOPE weights must be positive and non-increasing")
    return beta


@dataclass(frozen=True)
class Penalty:
    kind: str = "l1"
    slope_weights: np.ndarray = None

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ParameterError(f"unknown penalty {self.kind!r}")
        if self.kind == "slope" and self.slope_weights is not None:
            object.__setattr__(self, "slope_weights", _check_weights(self.slope_weights))

    def __eq__(self, other):
        if not isinstance(other, Penalty):
            return NotImplemented
        a, b = self.slope_weights, other.slope_weights
        same = a is b or (a is not None and b is not None and np.array_equal(a, b))
        return self.kind == other.kind and same

    def __hash__(self):
        return hash(self.kind)

    def weights(self, d):
        if self.slope_weights is None:
            return default_slope_weights(d)
        return _check_weights(self.slope_weights, d)

    def norm(self, t):
        return norm(self, t)

    def prox(self, v, threshold):
        """Proximal map of ``threshold * self.norm``."""
        if self.kind == "none":
            return np.array(v, dtype=float)
        if self.kind == "l1":
            return prox_l1(v, threshold)
        return prox_slope(v, threshold, self.weights(len(v)))

    def subgradient(self, t):
        return subgradient(self, t)


def norm(penalty, t):
    t = np.asarray(t, dtype=float)
    if penalty.kind == "none":
        return 0.0
    if penalty.kind == "l1":
        return float(np.abs(t).sum())
    beta = penalty.weights(t.size)
    return float(beta @ np.sort(np.abs(t))[::-1])


def prox_l1(v, threshold):
    """Soft thresholding ``sign(v) * max(|v| - threshold, 0)``."""
    if threshold < 0:
        raise ParameterError("threshold must be non-negative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def _pava_nonincreasing(w):
    """Euclidean projection of ``w`` onto non-increasing sequences."""
    sums, counts = [], []
    for x in w:
        s, c = float(x), 1
        # merge while the new block's mean exceeds the previous block's mean
        while sums and s * counts[-1] > sums[-1] * c:
            s += sums.pop()
            c += counts.pop()
        sums.append(s)
        counts.append(c)
    return np.repeat(np.array(sums) / np.array(counts), counts)


def prox_slope(v, lam, beta):
    """Proximal map of ``lam * sum_i beta_i |x|_(i)``.

    Sort ``|v|`` in decreasing order, subtract ``lam * beta``, project on
    the non-increasing cone, clip at zero, then undo the sort and restore
    the signs.
    """
    if lam < 0:
        raise ParameterError("lambda must be non-negative")
    v = np.asarray(v, dtype=float)
    beta = _check_weights(beta, v.size)
    order = np.argsort(-np.abs(v), kind="stable")
    w = _pava_nonincreasing(np.abs(v)[order] - lam * beta)
    out = np.empty_like(v)
    out[order] = np.maximum(w, 0.0)
    return np.sign(v) * out


def subgradient(penalty, t):
    """A subgradient of the penalty at ``t`` (``sign(0) = 0``)."""
    t = np.asarray(t, dtype=float)
    if penalty.kind == "none":
        return np.zeros_like(t)
    if penalty.kind == "l1":
        return np.sign(t)
    beta = penalty.weights(t.size)
    order = np.argsort(-np.abs(t), kind="stable")
    g = np.empty_like(t)
    g[order] = beta
    return g * np.sign(t)
