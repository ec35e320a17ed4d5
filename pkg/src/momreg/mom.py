"""Empirical quantiles and median-of-means aggregation.

The quantile of level ``alpha`` of ``K`` numbers is a set in general; we
always return the same representative, the ``ceil(alpha * K)``-th smallest
value (so the lower median when ``K`` is even). Ties between equal values
go to the lowest position in the input.
"""
import math
from typing import NamedTuple

import numpy as np

from .exceptions import ParameterError


class QuantileResult(NamedTuple):
    value: float
    index: int


def _rank(alpha, K):
    # guard against alpha*K landing a hair above an integer
    return min(K, max(1, math.ceil(alpha * K - 1e-12)))


def quantile(alpha, values):
    """Canonical ``(1 - alpha)``-empirical quantile of ``values``.

    Parameters
    ----------
    alpha : float in (0, 1)
    values : array_like of shape (K,)

    Returns
    -------
    QuantileResult
        ``value`` is the ``ceil(alpha*K)``-th order statistic and ``index``
        its position in ``values`` (lowest position on ties).
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ParameterError("quantile of an empty vector")
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    value = np.sort(values)[_rank(alpha, values.size) - 1]
    idx = int(np.flatnonzero(values == value)[0])
    return QuantileResult(float(value), idx)


def mom(values):
    """Median of the block means ``values`` (lower median for even K)."""
    return quantile(0.5, values)


def row_block_means(row_values, partition):
    """Mean of per-row values over each block of ``partition``."""
    return np.asarray(row_values)[partition.blocks].mean(axis=1)


def block_means(dataset, partition, loss):
    """Block means of ``loss(design_rows, response_rows)``.

    ``loss`` maps a design matrix and response vector to one value per row.
    """
    if partition.blocks.max() >= dataset.n_samples:
        raise ParameterError("partition refers to rows outside the dataset")
    rows = loss(dataset.design, dataset.response)
    return row_block_means(rows, partition)


def squared_loss(t):
    t = np.asarray(t, dtype=float)
    return lambda X, y: (y - X @ t) ** 2


def loss_difference(t, t_prime):
    """Per-row ``(y - <x, t>)^2 - (y - <x, t'>)^2``."""
    t = np.asarray(t, dtype=float)
    t_prime = np.asarray(t_prime, dtype=float)

    def evaluate(X, y):
        p, q = X @ t, X @ t_prime
        return (q - p) * (2.0 * y - (p + q))

    return evaluate


def median_block(dataset, partition, t, t_prime):
    """Index of the block whose mean of ``l_t - l_t'`` is the median."""
    return mom(block_means(dataset, partition, loss_difference(t, t_prime))).index
