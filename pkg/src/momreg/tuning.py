"""Hyperparameter selection and reference formulas.

``mom_cv`` is a V-fold cross-validation where the test-fold mean loss is
replaced by a median of block means and the average over folds by a
median, so that a few corrupted rows in a test fold cannot drive the
choice of ``(K, lam)``.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from ._io import write_csv
from .blocks import partition_fixed
from .dataset import ell2_error, generate, with_outliers
from .exceptions import NumericError, ParameterError
from .mom import mom, quantile, row_block_means
from .solvers import Estimate, SolverConfig, fit, fit_many

_REFIT_STREAM = 0x5EED


@dataclass(frozen=True)
class CvSpec:
    V: int = 5
    grid_K: tuple = (1, 2, 4, 8, 16, 24, 32)
    grid_lambda: tuple = tuple(np.arange(11) / np.sqrt(200))
    K_prime: int = None  # None: max(grid_K) // V
    seed: int = 0

    def resolved_K_prime(self):
        if self.K_prime is not None:
            return self.K_prime
        return max(1, max(self.grid_K) // self.V)


@dataclass
class CvResult:
    """Outcome of :func:`mom_cv`.

    ``criterion_table[i, j]`` is the criterion of ``(grid_K[i], grid_lambda[j])``
    and ``fold_details[i, j, v]`` the MOM test loss of fold ``v``. Cells whose
    fits failed numerically hold ``inf``.
    """

    best_K: int
    best_lambda: float
    criterion_table: np.ndarray
    fold_details: np.ndarray
    grid_K: tuple
    grid_lambda: tuple
    estimate: Estimate = None
    failures: list = field(default_factory=list)

    def to_csv(self, path):
        rows = [
            (int(K), float(lam), float(self.criterion_table[i, j]))
            for i, K in enumerate(self.grid_K)
            for j, lam in enumerate(self.grid_lambda)
        ]
        write_csv(path, ["K", "lambda", "criterion"], rows)


def _fit_seed(seed, *key):
    return int(np.random.SeedSequence(int(seed), spawn_key=tuple(key)).generate_state(1)[0])


def _cell_seed(seed, v, K, lam):
    # keyed on grid values, not positions, so reordering a grid only
    # reorders the table
    return _fit_seed(seed, v, int(K), int(np.float64(lam).view(np.uint64)))


def cv_folds(N, V, seed):
    """Test folds of size ``N // V`` from a seeded shuffle.

    Returns ``(folds, remainder)``; the remainder indices only ever appear
    on the training side of the last fold.
    """
    if V < 2 or V > N:
        raise ParameterError(f"need 2 <= V <= N, got V={V}, N={N}")
    perm = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1,))).permutation(N)
    m = N // V
    return [perm[v * m:(v + 1) * m] for v in range(V)], perm[V * m:]


def _train_index(folds, remainder, v):
    parts = [f for u, f in enumerate(folds) if u != v]
    if v == len(folds) - 1:
        parts.append(remainder)
    return np.concatenate(parts)


def mom_test_loss(dataset, t, K_prime):
    """MOM over ``K_prime`` contiguous blocks of the squared loss of ``t``."""
    rows = (dataset.response - dataset.design @ t) ** 2
    return mom(row_block_means(rows, partition_fixed(dataset.n_samples, K_prime))).value


def _fold_job(args):
    """MOM test losses of one ``(fold, K)`` cell across the lambda grid."""
    train, test, configs, K_prime = args
    scores = []
    for est in fit_many(train, configs):
        if isinstance(est, NumericError):
            scores.append(np.inf)
        else:
            scores.append(mom_test_loss(test, est.t_hat, K_prime))
    return scores


def mom_cv(dataset, template, spec, n_jobs=1):
    """Select ``(K, lam)`` on ``spec``'s grids by MOM V-fold cross-validation.

    Every fold fit uses ``template`` with ``K``, ``lam`` and the seed
    replaced; the seed of each fit depends only on ``spec.seed``, the fold
    and the grid values, so the table depends neither on evaluation order
    nor on the order of the grids. The returned result
    carries a refit on the whole dataset at the selected pair.
    """
    N = dataset.n_samples
    grid_K = tuple(int(k) for k in spec.grid_K)
    grid_lambda = tuple(float(x) for x in spec.grid_lambda)
    if not grid_K or not grid_lambda:
        raise ParameterError("grids must be non-empty")
    if min(grid_K) < 1 or min(grid_lambda) < 0:
        raise ParameterError("grid_K must be positive and grid_lambda non-negative")
    folds, remainder = cv_folds(N, spec.V, spec.seed)
    K_prime = spec.resolved_K_prime()
    fold_size = len(folds[0])
    if not 1 <= K_prime <= fold_size:
        raise ParameterError(f"K'={K_prime} must lie in [1, N/V={fold_size}]")
    n_train = N - fold_size - len(remainder)
    if max(grid_K) > n_train:
        raise ParameterError(f"max(grid_K)={max(grid_K)} exceeds training size {n_train}")

    jobs, slots = [], []
    for v in range(spec.V):
        train = dataset.subset(_train_index(folds, remainder, v))
        test = dataset.subset(folds[v])
        for i, K in enumerate(grid_K):
            configs = [template.with_(K=K, lam=lam, seed=_cell_seed(spec.seed, v, K, lam))
                       for lam in grid_lambda]
            jobs.append((train, test, configs, K_prime))
            slots.append((i, v))

    if n_jobs == 1:
        scores = [_fold_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            scores = list(pool.map(_fold_job, jobs))

    details = np.empty((len(grid_K), len(grid_lambda), spec.V))
    for (i, v), row in zip(slots, scores):
        details[i, :, v] = row
    failures = [(grid_K[i], grid_lambda[j], int(v)) for i, j, v in zip(*np.nonzero(np.isinf(details)))]
    table = np.empty(details.shape[:2])
    for i in range(len(grid_K)):
        for j in range(len(grid_lambda)):
            table[i, j] = quantile(0.5, details[i, j]).value

    # ties: smaller K first, then smaller lambda
    order = sorted(
        ((table[i, j], grid_K[i], grid_lambda[j], i, j)
         for i in range(len(grid_K)) for j in range(len(grid_lambda))),
        key=lambda r: (r[0], r[1], r[2]),
    )
    _, best_K, best_lambda, _, _ = order[0]
    refit = fit(dataset, template.with_(K=best_K, lam=best_lambda,
                                        seed=_fit_seed(spec.seed, _REFIT_STREAM)))
    return CvResult(best_K, best_lambda, table, details, grid_K, grid_lambda, refit, failures)


def recommended_lambda(sigma, d, N, K, c=1.0):
    """``c * sigma * sqrt(log(e sigma^2 d / K) / N)``."""
    arg = np.e * sigma**2 * d / K
    if not arg > 1:
        raise ParameterError(f"log argument e*sigma^2*d/K = {arg} must exceed 1")
    return c * sigma * np.sqrt(np.log(arg) / N)


def minimax_rate(sigma, s, d, N):
    """Constant-free squared-error rate ``sigma^2 s log(e d / s) / N``."""
    if not 1 <= s <= d:
        raise ParameterError(f"need 1 <= s <= d, got s={s}, d={d}")
    return sigma**2 * s * np.log(np.e * d / s) / N


class BreakdownResult(NamedTuple):
    m: int
    broken: bool
    report: list  # rows (m, median_error, broken)

    def to_csv(self, path):
        write_csv(path, ["m", "median_error", "broken"],
                  [(m, err, int(b)) for m, err, b in self.report])


def breakdown_probe(gen_spec, estimator, rate, reps=10, m_max=None, seed_offset=0):
    """Smallest number of gross outliers that breaks ``estimator``.

    For ``m = 0, 1, 2, ...`` the informative rows of ``gen_spec`` are
    augmented with ``m`` rows ``(X = 1, Y = 10000)``; the estimator is
    broken at ``m`` once the median l2 error over ``reps`` seeds exceeds
    ``rate``. This is a lower-bound probe: the adversary is fixed rather
    than worst case.

    ``estimator`` is either a :class:`SolverConfig` or a callable mapping a
    :class:`Dataset` to a coefficient vector. Numeric failures count as
    infinite error.
    """
    if not rate > 0:
        raise ParameterError("rate threshold must be positive")
    if m_max is None:
        m_max = gen_spec.N_good
    if isinstance(estimator, SolverConfig):
        config = estimator
        estimator = lambda ds: fit(ds, config).t_hat  # noqa: E731

    report = []
    for m in range(m_max + 1):
        errors = []
        for r in range(reps):
            spec = replace(with_outliers(gen_spec, m), seed=gen_spec.seed + seed_offset + r)
            ds = generate(spec)
            try:
                errors.append(ell2_error(estimator(ds), ds.truth))
            except NumericError:
                errors.append(np.inf)
        med = float(np.median(errors))
        broken = med > rate
        report.append((m, med, broken))
        if broken:
            return BreakdownResult(m, True, report)
    return BreakdownResult(m_max, False, report)
