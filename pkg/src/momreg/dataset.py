"""Regression datasets and the synthetic corruption generators.

Informative rows follow a sparse Gaussian linear model. Four families of
outliers can be mixed in:

* ``outlier-2``: ``Y = 1`` and ``X`` the all-ones vector,
* ``outlier-3``: ``Y = 10000`` and ``X`` the all-ones vector,
* ``outlier-4``: ``Y ~ Bernoulli(1/2)`` and ``X`` uniform on ``[0, 1]^d``,
* ``outlier-5``: same target as the informative rows but with an AR(1)
  Gaussian design and Student noise.

The rows are shuffled before being handed out, and the provenance of each
row is kept in ``Dataset.labels`` so that detection experiments can be
scored afterwards.
"""
from dataclasses import dataclass, replace

import numpy as np

from ._io import fmt, read_csv, write_csv
from .exceptions import ParameterError

INFORMATIVE = "informative"
OUTLIER_LABELS = ("outlier-2", "outlier-3", "outlier-4", "outlier-5")
LABELS = (INFORMATIVE,) + OUTLIER_LABELS

COEFFICIENT_STYLES = ("constant-10", "alternating-sign", "exp-decay")

# substream ids, so that changing one count never perturbs other draws
_STREAM_TARGET = 0
_STREAM_GOOD = 1
_STREAM_BAD4 = 2
_STREAM_BAD5 = 3
_STREAM_SHUFFLE = 4


@dataclass(frozen=True)
class GroundTruth:
    t_star: np.ndarray
    sigma: float
    sparsity: int
    support: np.ndarray

    def __post_init__(self):
        t_star = np.asarray(self.t_star, dtype=float)
        support = np.asarray(self.support, dtype=np.int64)
        d = t_star.shape[0]
        if len(np.unique(support)) != len(support):
            raise ParameterError("support indices must be distinct")
        if len(support) and (support.min() < 0 or support.max() >= d):
            raise ParameterError("support indices must lie in [0, d)")
        off = np.ones(d, dtype=bool)
        off[support] = False
        if np.any(t_star[off] != 0):
            raise ParameterError("t_star must vanish outside its support")
        object.__setattr__(self, "t_star", t_star)
        object.__setattr__(self, "support", support)


@dataclass(frozen=True)
class Dataset:
    """Design matrix, response and optional provenance.

    The arrays are made read-only on construction so a dataset can be
    shared between concurrent fits.
    """

    design: np.ndarray
    response: np.ndarray
    labels: tuple = None
    truth: GroundTruth = None

    def __post_init__(self):
        X = np.array(self.design, dtype=float)
        y = np.array(self.response, dtype=float)
        if X.ndim != 2:
            raise ParameterError(f"design must be 2-d, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ParameterError(
                f"response length {y.shape} does not match design rows {X.shape[0]}"
            )
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != X.shape[0]:
                raise ParameterError("labels must have one entry per row")
            object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self):
        return self.design.shape[0]

    @property
    def n_features(self):
        return self.design.shape[1]

    def subset(self, index):
        index = np.asarray(index, dtype=np.int64)
        labels = None if self.labels is None else tuple(self.labels[i] for i in index)
        return Dataset(self.design[index], self.response[index], labels, self.truth)

    def outlier_mask(self):
        if self.labels is None:
            raise ParameterError("dataset carries no provenance labels")
        return np.array([lab != INFORMATIVE for lab in self.labels])


@dataclass(frozen=True)
class GenSpec:
    """Recipe for :func:`generate`.

    ``N_bad2`` .. ``N_bad5`` count the rows of each outlier family (see
    the module docstring).
    """

    N_good: int = 200
    N_bad2: int = 0
    N_bad3: int = 0
    N_bad4: int = 0
    N_bad5: int = 0
    d: int = 500
    s: int = 10
    sigma: float = 1.0
    coefficient_style: str = "constant-10"
    ar_rho: float = 0.5
    student_df: float = 3.0
    seed: int = 0

    def validate(self):
        counts = (self.N_good, self.N_bad2, self.N_bad3, self.N_bad4, self.N_bad5)
        if any(int(c) != c or c < 0 for c in counts):
            raise ParameterError("row counts must be non-negative integers")
        if sum(counts) < 1:
            raise ParameterError("at least one row is required")
        if self.d < 1:
            raise ParameterError("d must be positive")
        if self.s < 0 or self.s > self.d:
            raise ParameterError(f"sparsity s={self.s} must lie in [0, d={self.d}]")
        if self.sigma < 0:
            raise ParameterError("sigma must be non-negative")
        if self.coefficient_style not in COEFFICIENT_STYLES:
            raise ParameterError(f"unknown coefficient style {self.coefficient_style!r}")
        if not -1 < self.ar_rho < 1:
            raise ParameterError("ar_rho must lie in (-1, 1)")
        if self.student_df <= 0:
            raise ParameterError("student_df must be positive")
        return self

    @property
    def n_total(self):
        return self.N_good + self.N_bad2 + self.N_bad3 + self.N_bad4 + self.N_bad5


def _substream(seed, stream):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream,)))


def make_sparse_target(d, s, style="constant-10", seed=0):
    """Draw an ``s``-sparse target vector in dimension ``d``.

    The support is drawn uniformly at random. Non-zero magnitudes follow
    ``style``:

    ``constant-10``
        every non-zero entry is 10.
    ``alternating-sign``
        +10, -10, +10, ... along the sorted support.
    ``exp-decay``
        ``exp(-j/10)`` for the j-th support index (j = 1..s, sorted order).
    """
    if s < 0 or s > d:
        raise ParameterError(f"sparsity s={s} must lie in [0, d={d}]")
    if style not in COEFFICIENT_STYLES:
        raise ParameterError(f"unknown coefficient style {style!r}")
    rng = _substream(seed, _STREAM_TARGET)
    support = np.sort(rng.choice(d, size=s, replace=False)) if s else np.array([], dtype=np.int64)
    t = np.zeros(d)
    if style == "constant-10":
        t[support] = 10.0
    elif style == "alternating-sign":
        t[support] = 10.0 * (-1.0) ** np.arange(s)
    else:
        t[support] = np.exp(-np.arange(1, s + 1) / 10.0)
    return t


def ar_design(n, d, rho, rng):
    """Gaussian rows with covariance ``rho ** |i - j|`` (AR(1) recursion)."""
    eps = rng.standard_normal((n, d))
    X = np.empty((n, d))
    X[:, 0] = eps[:, 0]
    scale = np.sqrt(1.0 - rho**2)
    for j in range(1, d):
        X[:, j] = rho * X[:, j - 1] + scale * eps[:, j]
    return X


def generate(spec):
    """Build the shuffled union of informative rows and outliers."""
    spec.validate()
    d = spec.d
    t_star = make_sparse_target(d, spec.s, spec.coefficient_style, spec.seed)
    truth = GroundTruth(t_star, spec.sigma, spec.s, np.flatnonzero(t_star))

    parts_X, parts_y, labels = [], [], []

    rng = _substream(spec.seed, _STREAM_GOOD)
    X = rng.standard_normal((spec.N_good, d))
    noise = rng.standard_normal(spec.N_good)
    parts_X.append(X)
    parts_y.append(X @ t_star + spec.sigma * noise)
    labels += [INFORMATIVE] * spec.N_good

    parts_X.append(np.ones((spec.N_bad2, d)))
    parts_y.append(np.ones(spec.N_bad2))
    labels += ["outlier-2"] * spec.N_bad2

    parts_X.append(np.ones((spec.N_bad3, d)))
    parts_y.append(np.full(spec.N_bad3, 10000.0))
    labels += ["outlier-3"] * spec.N_bad3

    rng = _substream(spec.seed, _STREAM_BAD4)
    parts_X.append(rng.uniform(0.0, 1.0, (spec.N_bad4, d)))
    parts_y.append(rng.integers(0, 2, spec.N_bad4).astype(float))
    labels += ["outlier-4"] * spec.N_bad4

    rng = _substream(spec.seed, _STREAM_BAD5)
    X5 = ar_design(spec.N_bad5, d, spec.ar_rho, rng)
    parts_X.append(X5)
    parts_y.append(X5 @ t_star + rng.standard_t(spec.student_df, spec.N_bad5))
    labels += ["outlier-5"] * spec.N_bad5

    X = np.vstack(parts_X)
    y = np.concatenate(parts_y)
    perm = _substream(spec.seed, _STREAM_SHUFFLE).permutation(len(y))
    return Dataset(X[perm], y[perm], tuple(labels[i] for i in perm), truth)


def with_outliers(spec, n_outliers, kind=3):
    """Copy of ``spec`` with ``n_outliers`` rows of outlier family ``kind``."""
    return replace(spec, **{f"N_bad{kind}": int(n_outliers)})


def ell2_error(t_hat, truth):
    t_hat = np.asarray(t_hat, dtype=float)
    t_star = truth.t_star if isinstance(truth, GroundTruth) else np.asarray(truth, dtype=float)
    if t_hat.shape != t_star.shape:
        raise ParameterError(f"dimension mismatch: {t_hat.shape} vs {t_star.shape}")
    return float(np.linalg.norm(t_hat - t_star))


def to_csv(dataset, path):
    """Write ``y,x1,...,xd,label``; the label column is empty when unknown."""
    d = dataset.n_features
    header = ["y"] + [f"x{j + 1}" for j in range(d)] + ["label"]
    labels = dataset.labels or ("",) * dataset.n_samples
    rows = (
        [fmt(y)] + [fmt(v) for v in x] + [lab]
        for x, y, lab in zip(dataset.design, dataset.response, labels)
    )
    write_csv(path, header, rows)


def from_csv(path):
    header, rows = read_csv(path)
    if not header or header[0] != "y" or header[-1] != "label":
        raise ParameterError(f"{path}: expected header y,x1,...,xd,label")
    d = len(header) - 2
    if header[1:-1] != [f"x{j + 1}" for j in range(d)]:
        raise ParameterError(f"{path}: feature columns must be named x1..x{d}")
    y = np.array([float(r[0]) for r in rows])
    X = np.array([[float(v) for v in r[1:-1]] for r in rows]).reshape(len(rows), d)
    labels = [r[-1] for r in rows]
    return Dataset(X, y, None if all(lab == "" for lab in labels) else labels)
