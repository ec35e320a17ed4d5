"""Depth scores: how often each row sits in the selected median block.

With blocks re-drawn at random before every selection, a row that
distorts the loss (a gross outlier) makes its block extreme and is rarely,
if ever, part of the median block. Counting memberships over a run gives a
score where low values point at outliers.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._io import write_csv
from .exceptions import ParameterError
from .solvers import fit

FLAG_METHODS = ("zero-score", "largest-gap")


@dataclass(frozen=True)
class DepthScores:
    """Per-row selection counts, aligned with the dataset row order."""

    counts: np.ndarray
    iterations: int = 0
    selections_per_iteration: int = 2

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or (counts < 0).any():
            raise ParameterError("counts must be a vector of non-negative integers")
        object.__setattr__(self, "counts", counts)

    def __len__(self):
        return self.counts.size

    def to_csv(self, path, labels=None):
        """Write ``index,count,label`` rows; ``label`` is empty when unknown."""
        if labels is None:
            labels = [""] * len(self)
        rows = [(i, int(c), lab) for i, (c, lab) in enumerate(zip(self.counts, labels))]
        write_csv(path, ["index", "count", "label"], rows)


class FlagResult(NamedTuple):
    indices: np.ndarray
    no_gap: bool = False


def depth_scores(dataset, config):
    """Fit ``config`` on ``dataset`` and count median-block memberships.

    Both the descent and the ascent selection of every iteration add one
    to each row of the chosen block. Rows left out of a draw (when ``K``
    does not divide ``N``) get nothing for that draw.
    """
    if config.block_policy.mode != "random-each-step":
        raise ParameterError("depth scores need blocks re-drawn at random at every step")
    est = fit(dataset, config)
    counts = np.zeros(dataset.n_samples, dtype=np.int64)
    for descent_rows, ascent_rows in est.trace.selected_indices:
        counts += np.bincount(descent_rows, minlength=dataset.n_samples)
        counts += np.bincount(ascent_rows, minlength=dataset.n_samples)
    return DepthScores(counts, len(est.trace), 2)


def flag_outliers(scores, method="zero-score"):
    """Indices whose score marks them as outliers.

    ``zero-score`` returns the rows never selected. ``largest-gap`` sorts
    the counts, cuts at the largest jump between consecutive values (the
    first one on ties) and returns the rows below the cut; when all counts
    are equal there is no jump and the result is empty with ``no_gap`` set.
    """
    counts = scores.counts if isinstance(scores, DepthScores) else np.asarray(scores)
    if method == "zero-score":
        return FlagResult(np.flatnonzero(counts == 0))
    if method != "largest-gap":
        raise ParameterError(f"unknown method {method!r}; expected one of {FLAG_METHODS}")
    if counts.size == 0 or counts.min() == counts.max():
        return FlagResult(np.array([], dtype=np.int64), True)
    ordered = np.sort(counts)
    cut = ordered[int(np.argmax(np.diff(ordered)))]
    return FlagResult(np.flatnonzero(counts <= cut))


def merge_scores(*scores):
    """Sum the counts of independent runs on the same dataset."""
    if not scores:
        raise ParameterError("nothing to merge")
    sizes = {len(s) for s in scores}
    per_iter = {s.selections_per_iteration for s in scores}
    if len(sizes) != 1 or len(per_iter) != 1:
        raise ParameterError("scores must come from the same dataset and selection scheme")
    counts = np.sum([s.counts for s in scores], axis=0)
    return DepthScores(counts, sum(s.iterations for s in scores), per_iter.pop())
