"""Alternating descent-ascent solvers for the MOM minmax estimator.

The estimator is a saddle point of

    T(t', t) = MOM_K[l_t - l_t'] + lam * (pen(t) - pen(t'))

where ``l_t(x, y) = (y - <x, t>)^2`` and ``MOM_K`` is the median of the
``K`` block means. Each iteration

1. (re)draws the block partition when blocks are random,
2. picks the block whose mean of ``l_t - l_t'`` is the median,
3. moves ``t`` with one step of a LASSO-type solver run on that block only,
4. re-draws / re-selects a median block and moves ``t'`` the same way.

Only the selected block's rows enter an update, so blocks holding gross
outliers (which sit in the tails of the block means) are skipped.

All four update rules act on the normalized block objective

    F_k(t) = |B_k|^-1 * ||Y_k - X_k t||^2 + lam * pen(t),

which is obtained by feeding the step functions the block rows divided by
``sqrt(|B_k|)`` (``sqrt(2 / |B_k|)`` for ADMM, whose t-update is written
for a half squared loss).
"""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg.lapack import dpotrf, dpotrs

from ._io import write_csv
from .blocks import BlockPolicy, partition_fixed
from .exceptions import NumericError, ParameterError
from .mom import _rank
from .regularizers import Penalty

ALGORITHMS = ("subgradient", "proximal", "admm", "ccd")
STEP_POLICIES = ("inverse-lipschitz", "armijo")
MODES = ("minmax", "maxmin")

DIVERGENCE_BOUND = 1e12


@dataclass(frozen=True)
class SolverConfig:
    algorithm: str = "admm"
    K: int = 1
    lam: float = 0.0
    penalty: Penalty = field(default_factory=Penalty)
    block_policy: BlockPolicy = field(default_factory=BlockPolicy)
    max_iters: int = 200
    eps_stop: float = 1e-6
    step_policy: str = "inverse-lipschitz"
    armijo_rho: float = 0.5
    armijo_delta: float = 1e-4
    armijo_gamma0: float = 1.0
    admm_rho: float = 10.0
    mode: str = "minmax"
    seed: int = 0

    def validate(self, n_samples=None):
        if self.algorithm not in ALGORITHMS:
            raise ParameterError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.step_policy not in STEP_POLICIES:
            raise ParameterError(f"unknown step policy {self.step_policy!r}")
        if self.mode not in MODES:
            raise ParameterError(f"unknown mode {self.mode!r}")
        if int(self.K) != self.K or self.K < 1:
            raise ParameterError(f"K must be a positive integer, got {self.K}")
        if n_samples is not None and self.K > n_samples:
            raise ParameterError(f"K={self.K} exceeds the number of samples N={n_samples}")
        if self.lam < 0 or not np.isfinite(self.lam):
            raise ParameterError("lambda must be a finite non-negative number")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be positive")
        if not self.eps_stop > 0:
            raise ParameterError("eps_stop must be positive")
        if not 0 < self.armijo_rho < 1:
            raise ParameterError("armijo_rho must lie in (0, 1)")
        if not self.armijo_delta > 0 or not self.armijo_gamma0 > 0:
            raise ParameterError("armijo_delta and armijo_gamma0 must be positive")
        if not self.admm_rho > 0:
            raise ParameterError("admm_rho must be positive")
        return self

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class IterTrace:
    """Per-iteration diagnostics of a :func:`fit` run.

    ``objective[p]`` is ``T(t'_p, t_p)`` evaluated after both updates of
    iteration ``p``, on the last partition drawn in that iteration.
    ``selected_indices[p]`` holds the rows of the descent and ascent
    median blocks. ``flags`` collects ``(iteration, message)`` notes such as
    zero columns met by the coordinate descent.
    """

    objective: list = field(default_factory=list)
    descent_block: list = field(default_factory=list)
    ascent_block: list = field(default_factory=list)
    step_norm: list = field(default_factory=list)
    selected_indices: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def __len__(self):
        return len(self.objective)

    def to_csv(self, path):
        rows = zip(range(len(self)), self.objective, self.descent_block,
                   self.ascent_block, self.step_norm)
        write_csv(path, ["iter", "objective", "descent_block", "ascent_block", "step_norm"], rows)


@dataclass
class Estimate:
    t_hat: np.ndarray
    t_adv: np.ndarray
    trace: IterTrace
    converged: bool
    iterations_used: int


# --------------------------------------------------------------------------
# single-block update rules


def block_gradient(t, X, y):
    """Gradient of ``||y - X t||^2``."""
    return -2.0 * X.T @ (y - X @ t)


def step_subgradient(t, X, y, lam, penalty, step):
    """``t + 2 step X^T (y - X t) - lam * step * g`` with ``g`` a penalty subgradient."""
    t = np.asarray(t, dtype=float)
    return t + 2.0 * step * (X.T @ (y - X @ t)) - lam * step * penalty.subgradient(t)


def step_proximal(t, X, y, lam, penalty, step):
    """Forward gradient step then the prox of ``lam * step * pen``."""
    t = np.asarray(t, dtype=float)
    return penalty.prox(t + 2.0 * step * (X.T @ (y - X @ t)), lam * step)


@dataclass
class AdmmState:
    t: np.ndarray
    z: np.ndarray
    u: np.ndarray

    @classmethod
    def zeros(cls, d):
        return cls(np.zeros(d), np.zeros(d), np.zeros(d))


def admm_factor(X, rho):
    """Cholesky factor used to apply ``(X^T X + rho I)^-1``.

    When ``X`` has fewer rows than columns the ``n x n`` matrix
    ``rho I + X X^T`` is factored instead (Woodbury identity).
    """
    n, d = X.shape
    if n < d:
        kind, M = "wide", X @ X.T
    else:
        kind, M = "tall", X.T @ X
    M[np.diag_indices_from(M)] += rho
    c, info = dpotrf(M, lower=1, clean=0)
    if info != 0:
        raise NumericError(f"Cholesky factorization failed (info={info})")
    return kind, c


def _admm_solve(factor, X, rho, b):
    kind, c = factor
    if kind == "tall":
        return dpotrs(c, b, lower=1)[0]
    return (b - X.T @ dpotrs(c, X @ b, lower=1)[0]) / rho


def step_admm(state, X, y, lam, rho, penalty=None, factor=None):
    """One ADMM round on ``1/2 ||y - X t||^2 + lam * pen(z)`` subject to ``t = z``.

    ``t = (X^T X + rho I)^-1 (X^T y + rho z - u)``, ``z = prox_{(lam/rho) pen}(t + u/rho)``,
    ``u = u + rho (t - z)``.
    """
    if not rho > 0:
        raise ParameterError("admm rho must be positive")
    penalty = penalty or Penalty("l1")
    if factor is None:
        factor = admm_factor(X, rho)
    t = _admm_solve(factor, X, rho, X.T @ y + rho * state.z - state.u)
    z = penalty.prox(t + state.u / rho, lam / rho)
    u = state.u + rho * (t - z)
    return AdmmState(t, z, u)


def step_ccd(t, X, y, lam, flags=None):
    """One Gauss-Seidel sweep of exact coordinate minimization of ``||y - X t||^2 + lam ||t||_1``.

    Each coordinate is set to ``R_j / ||X_j||^2 * (1 - lam / (2 |R_j|))_+`` with
    ``R_j`` the correlation of column ``j`` with the partial residual.
    Zero columns get coordinate 0; their indices are appended to ``flags``.
    """
    t = np.array(t, dtype=float)
    col_sq = np.einsum("ij,ij->j", X, X)
    r = y - X @ t
    for j in range(t.size):
        xj = X[:, j]
        if col_sq[j] == 0.0:
            t[j] = 0.0
            if flags is not None:
                flags.append(j)
            continue
        if t[j] != 0.0:
            r += t[j] * xj
        R = xj @ r
        if abs(R) <= lam / 2.0:
            t[j] = 0.0
        else:
            t[j] = R / col_sq[j] * (1.0 - lam / (2.0 * abs(R)))
            r -= t[j] * xj
    return t


def operator_norm_sq(X, n_iter=50, tol=1e-8):
    """Largest eigenvalue of ``X^T X`` by power iteration."""
    n, d = X.shape
    G = X @ X.T if n < d else X.T @ X
    m = G.shape[0]
    v = 1.1 + np.cos(1.3 * np.arange(m))
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(n_iter):
        w = G @ v
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(new - value) <= tol * max(abs(new), 1.0):
            value = new
            break
        value = new
    return max(value, float(v @ G @ v))


def block_objective(t, X, y, lam, penalty):
    r = y - X @ t
    return float(r @ r) + lam * penalty.norm(t)


def compute_step(policy, X, y, t, lam=0.0, penalty=None, rho=0.5, delta=1e-4,
                 gamma0=1.0, max_backtracks=60, flags=None):
    """Step size for the subgradient / proximal updates on one block.

    ``inverse-lipschitz`` returns ``1 / ||X||_op^2``. ``armijo`` shrinks
    ``gamma0`` by ``rho`` until
    ``F(t - gamma g) <= F(t) - delta * gamma * ||g||^2`` for
    ``F(t) = ||y - X t||^2 + lam pen(t)`` and ``g`` a subgradient of ``F``.
    A zero block matrix yields 1 and a note in ``flags``.
    """
    if X.shape[0] == 0:
        raise ParameterError("empty block")
    if not X.any():
        if flags is not None:
            flags.append("zero block matrix")
        return 1.0
    if policy == "inverse-lipschitz":
        return 1.0 / operator_norm_sq(X)
    if policy != "armijo":
        raise ParameterError(f"unknown step policy {policy!r}")
    penalty = penalty or Penalty("l1")
    g = block_gradient(t, X, y) + lam * penalty.subgradient(t)
    gg = float(g @ g)
    f0 = block_objective(t, X, y, lam, penalty)
    gamma = gamma0
    for _ in range(max_backtracks):
        if block_objective(t - gamma * g, X, y, lam, penalty) <= f0 - delta * gamma * gg:
            break
        gamma *= rho
    return gamma


# --------------------------------------------------------------------------
# the alternating loop


def _median_blocks(y, pred_t, pred_tp, blocks):
    """Median block of ``l_t - l_t'`` for each game in a stack.

    ``pred_t``/``pred_tp`` are ``(m, N)`` predictions of both iterates;
    ``blocks`` is ``(m, K, n)``, or ``(1, K, n)`` when all games share the
    partition. When every block mean is equal (e.g. ``t == t'`` at the
    start) each block is a median and the choice carries no information;
    the block with the median mean loss ``l_t`` is used instead, which keeps
    gross outliers out of the very first steps.
    """
    m = pred_t.shape[0]
    rows = np.arange(m)[:, None, None]
    diff = (pred_tp - pred_t) * (2.0 * y - (pred_t + pred_tp))
    means = diff[rows, blocks].mean(axis=2)
    K = means.shape[1]
    if K > 1:
        flat = means.max(axis=1) == means.min(axis=1)
        if flat.any():
            loss = (y - pred_t[flat]) ** 2
            sub = blocks if blocks.shape[0] == 1 else blocks[flat]
            means[flat] = loss[np.arange(loss.shape[0])[:, None, None], sub].mean(axis=2)
    med = np.sort(means, axis=1)[:, _rank(0.5, K) - 1]
    # lowest block index among those attaining the median
    return np.argmax(means == med[:, None], axis=1)


def _penalty_norms(penalty, T):
    if penalty.kind == "none":
        return np.zeros(T.shape[0])
    if penalty.kind == "l1":
        return np.abs(T).sum(axis=1)
    return np.array([penalty.norm(t) for t in T])


def _same_game(a, b):
    """True when two configs differ at most in ``lam`` and ``seed``."""
    pa, pb = a.penalty, b.penalty
    if pa.kind != pb.kind:
        return False
    wa, wb = pa.slope_weights, pb.slope_weights
    if (wa is None) != (wb is None) or (wa is not None and not np.array_equal(wa, wb)):
        return False
    keep = dict(lam=0.0, seed=0, penalty=Penalty())
    return a.with_(**keep) == b.with_(**keep)


class _Games:
    """A stack of alternating games on one dataset.

    The games share every setting except ``lam`` and the seed, so the
    costly per-step work (row gathers, Gram blocks, predictions, block
    means) runs as stacked array operations; factorizations and solves stay
    per game. Every stacked operation acts row by row, so a game's result
    does not depend on the other games in the stack.
    """

    GRAM_LIMIT = 4000

    def __init__(self, X, y, configs):
        cfg = configs[0]
        self.X, self.y, self.cfg = X, y, cfg
        self.N, self.d = X.shape
        self.K = cfg.K
        self.n = self.N // self.K
        self.B = len(configs)
        self.lam = np.array([c.lam for c in configs], dtype=float)
        self.penalty = cfg.penalty
        self.rho = cfg.admm_rho
        policy = cfg.block_policy
        self.fixed = None
        if policy.mode == "fixed":
            self.fixed = partition_fixed(self.N, self.K).blocks[None]
        self.rngs = [np.random.default_rng(c.seed if policy.seed is None else policy.seed)
                     for c in configs]
        self.wide = self.n < self.d
        self.cacheable = self.fixed is not None or self.K == 1
        self._cache = {}
        self.gram = None
        if (cfg.algorithm == "admm" and self.wide and not self.cacheable
                and self.N <= self.GRAM_LIMIT):
            self.gram = X @ X.T
        self.XT = X.T
        # side 0 is the minimizing player, side 1 the maximizing one
        self.T = np.zeros((2, self.B, self.d))
        self.P = np.zeros((2, self.B, self.N))
        if cfg.algorithm == "admm":
            self.Z = np.zeros((2, self.B, self.d))
            self.U = np.zeros((2, self.B, self.d))

    def draw(self, alive):
        if self.fixed is not None:
            return self.fixed
        size = self.K * self.n
        perms = np.stack([self.rngs[b].permutation(self.N)[:size] for b in alive])
        return perms.reshape(len(alive), self.K, self.n)

    def _factors(self, idx, Xb):
        if not self.cacheable:
            if self.gram is None:
                return [admm_factor(x, self.rho) for x in Xb]
            M = self.gram[idx[:, :, None], idx[:, None, :]] * (2.0 / self.n)
            M.reshape(len(idx), -1)[:, ::self.n + 1] += self.rho
            out = []
            for Mi in M:
                c, info = dpotrf(Mi, lower=1, clean=0)
                if info != 0:
                    raise NumericError(f"Cholesky factorization failed (info={info})")
                out.append(("wide", c))
            return out
        out = []
        for i, row in enumerate(idx):
            key = row.tobytes()
            factor = self._cache.get(key)
            if factor is None:
                factor = self._cache[key] = admm_factor(Xb[i], self.rho)
            out.append(factor)
        return out

    def _admm(self, side, alive, idx):
        idx = np.sort(idx, axis=1)
        s = np.sqrt(2.0 / self.n)
        Xb = self.X[idx] * s
        yb = self.y[idx] * s
        XbT = Xb.transpose(0, 2, 1)
        Z, U = self.Z[side, alive], self.U[side, alive]
        rhs = np.matmul(XbT, yb[:, :, None])[:, :, 0] + self.rho * Z - U
        factors = self._factors(idx, Xb)
        if self.wide:
            v = np.matmul(Xb, rhs[:, :, None])
            w = np.stack([dpotrs(f[1], v[i], lower=1)[0] for i, f in enumerate(factors)])
            T = (rhs - np.matmul(XbT, w)[:, :, 0]) / self.rho
        else:
            T = np.stack([dpotrs(f[1], rhs[i], lower=1)[0] for i, f in enumerate(factors)])
        V = T + U / self.rho
        thr = self.lam[alive] / self.rho
        if self.penalty.kind == "l1":
            Znew = np.sign(V) * np.maximum(np.abs(V) - thr[:, None], 0.0)
        else:
            Znew = np.stack([self.penalty.prox(V[i], thr[i]) for i in range(len(alive))])
        self.Z[side, alive] = Znew
        self.U[side, alive] = U + self.rho * (T - Znew)
        return T

    def _single(self, side, b, idx, flags, p):
        cfg, lam = self.cfg, self.lam[b]
        scale = 1.0 / np.sqrt(idx.size)
        Xb, yb = self.X[idx] * scale, self.y[idx] * scale
        t = self.T[side, b]
        if cfg.algorithm == "ccd":
            zero_cols = []
            new = step_ccd(t, Xb, yb, lam, zero_cols)
            if zero_cols:
                flags.append((p, f"zero columns {zero_cols[:10]} set to 0"))
            return new
        notes = []
        step = compute_step(cfg.step_policy, Xb, yb, t, lam, self.penalty, cfg.armijo_rho,
                            cfg.armijo_delta, cfg.armijo_gamma0, flags=notes)
        if cfg.step_policy == "inverse-lipschitz" and not notes:
            # the update carries a factor 2 on X^T r, so 1/||X||^2 sits on the
            # stability boundary; halve it to get 1/L of ||y - X t||^2
            step *= 0.5
        flags.extend((p, note) for note in notes)
        if cfg.algorithm == "subgradient":
            return step_subgradient(t, Xb, yb, lam, self.penalty, step)
        return step_proximal(t, Xb, yb, lam, self.penalty, step)

    def update(self, side, alive, idx, traces, p):
        if self.cfg.algorithm == "admm":
            return self._admm(side, alive, idx)
        return np.stack([self._single(side, b, idx[i], traces[b].flags, p)
                         for i, b in enumerate(alive)])

    def predict(self, T):
        # one product per game keeps results independent of the stack size
        return np.matmul(T[:, None, :], self.XT)[:, 0, :]

    def objective(self, alive, blocks):
        Pt, Ptp = self.P[0, alive], self.P[1, alive]
        diff = (Ptp - Pt) * (2.0 * self.y - (Pt + Ptp))
        means = diff[np.arange(len(alive))[:, None, None], blocks].mean(axis=2)
        med = np.sort(means, axis=1)[:, _rank(0.5, self.K) - 1]
        pen = _penalty_norms(self.penalty, self.T[0, alive]) - _penalty_norms(self.penalty, self.T[1, alive])
        return med + self.lam[alive] * pen


def _run_games(dataset, configs, callback=None):
    X, y = dataset.design, dataset.response
    N, d = X.shape
    if N == 0 or d == 0:
        raise ParameterError("empty dataset")
    if not configs:
        raise ParameterError("no configuration given")
    for c in configs:
        c.validate(N)
    base = configs[0]
    if not all(_same_game(base, c) for c in configs[1:]):
        raise ParameterError("stacked configs may only differ in lam and seed")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ParameterError("dataset contains non-finite values")
    if base.penalty.kind == "slope":
        base.penalty.weights(d)

    games = _Games(X, y, configs)
    B = len(configs)
    traces = [IterTrace() for _ in range(B)]
    errors = [None] * B
    converged = [False] * B
    sides = (0, 1) if base.mode == "minmax" else (1, 0)
    alive = np.arange(B)

    for p in range(base.max_iters):
        if alive.size == 0:
            break
        m = alive.size
        moved = np.zeros((2, m))
        picks, chosen = {}, {}
        failed = np.zeros(m, dtype=bool)
        for side in sides:
            blocks = games.draw(alive)
            with np.errstate(all="ignore"):
                k = _median_blocks(y, games.P[0, alive], games.P[1, alive], blocks)
            idx = blocks[np.arange(m) if blocks.shape[0] > 1 else 0, k]
            idx = np.broadcast_to(idx, (m, idx.shape[-1]))
            with np.errstate(all="ignore"):
                new = games.update(side, alive, idx, traces, p)
                bad = ~np.isfinite(new).all(axis=1) | (np.abs(new).max(axis=1) > DIVERGENCE_BOUND)
            for i in np.flatnonzero(bad & ~failed):
                b = alive[i]
                errors[b] = NumericError(f"{base.algorithm} diverged at iteration {p}", iteration=p)
            failed |= bad
            moved[side] = np.linalg.norm(new - games.T[side, alive], axis=1)
            games.T[side, alive] = new
            with np.errstate(all="ignore"):
                games.P[side, alive] = games.predict(new)
            picks[side], chosen[side] = k, idx

        with np.errstate(all="ignore"):
            obj = games.objective(alive, blocks)
        keep = np.ones(m, dtype=bool)
        for i, b in enumerate(alive):
            if failed[i]:
                keep[i] = False
                continue
            if not np.isfinite(obj[i]):
                errors[b] = NumericError(f"non-finite objective at iteration {p}", iteration=p)
                keep[i] = False
                continue
            tr = traces[b]
            tr.objective.append(float(obj[i]))
            tr.descent_block.append(int(picks[0][i]))
            tr.ascent_block.append(int(picks[1][i]))
            tr.step_norm.append(float(max(moved[0, i], moved[1, i])))
            tr.selected_indices.append((chosen[0][i].copy(), chosen[1][i].copy()))
            if callback is not None:
                callback(b, p, games.T[0, b], games.T[1, b])
            if moved[0, i] < base.eps_stop and moved[1, i] < base.eps_stop:
                converged[b] = True
                keep[i] = False
        alive = alive[keep]

    out = []
    for b in range(B):
        if errors[b] is not None:
            out.append(errors[b])
            continue
        t_hat, t_adv = games.T[0, b].copy(), games.T[1, b].copy()
        if base.mode == "maxmin":
            t_hat, t_adv = t_adv, t_hat
        out.append(Estimate(t_hat, t_adv, traces[b], converged[b], len(traces[b])))
    return out


def fit(dataset, config, callback=None):
    """Run the configured alternating solver from ``t = t' = 0``.

    Parameters
    ----------
    dataset : Dataset
    config : SolverConfig
    callback : callable, optional
        Called as ``callback(p, t, t_prime)`` after every iteration.

    Returns
    -------
    Estimate
        ``t_hat`` is the minimizing player in ``minmax`` mode and the
        maximizing one in ``maxmin`` mode.

    Raises
    ------
    ParameterError
        Inconsistent shapes, non-finite data or ``K > N``.
    NumericError
        An iterate became non-finite or exceeded ``1e12`` in magnitude.
    """
    cb = None if callback is None else (lambda b, p, t, tp: callback(p, t, tp))
    result = _run_games(dataset, [config], cb)[0]
    if isinstance(result, NumericError):
        raise result
    return result


def fit_many(dataset, configs):
    """Run several fits that differ only in ``lam`` and ``seed``.

    Each entry of the returned list equals ``fit(dataset, configs[i])``, or
    is the :class:`NumericError` that call would raise. Sharing the row
    gathers and products across the fits is much cheaper than calling
    :func:`fit` in a loop, which matters for grid searches.
    """
    return _run_games(dataset, list(configs))


def minmax_objective(dataset, partition, t, t_prime, lam, penalty=None):
    """``MOM_K[l_t - l_t'] + lam (pen(t) - pen(t'))`` on a given partition."""
    penalty = penalty or Penalty("l1")
    X, y = dataset.design, dataset.response
    p, q = X @ np.asarray(t, dtype=float), X @ np.asarray(t_prime, dtype=float)
    diff = (q - p) * (2.0 * y - (p + q))
    means = diff[partition.blocks].mean(axis=1)
    med = np.sort(means)[_rank(0.5, means.size) - 1]
    return float(med + lam * (penalty.norm(t) - penalty.norm(t_prime)))


def duality_gap(trace):
    """Last recorded value of the minmax objective; near 0 at a saddle point."""
    if len(trace) == 0:
        raise ParameterError("empty trace")
    return trace.objective[-1]


def lasso_objective(dataset, t, lam, penalty=None):
    """Full-sample ``N^-1 ||Y - X t||^2 + lam pen(t)``."""
    penalty = penalty or Penalty("l1")
    r = dataset.response - dataset.design @ t
    return float(r @ r) / dataset.n_samples + lam * penalty.norm(t)
