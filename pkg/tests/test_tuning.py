import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momreg.dataset import GenSpec, ell2_error, generate
from momreg.exceptions import ParameterError
from momreg.solvers import SolverConfig, fit
from momreg.tuning import (CvSpec, breakdown_probe, cv_folds, minimax_rate, mom_cv,
                           mom_test_loss, recommended_lambda)
from momreg.tuning import _REFIT_STREAM, _cell_seed, _fit_seed, _train_index


@pytest.fixture(scope="module")
def small_clean():
    return generate(GenSpec(N_good=100, d=50, s=5, seed=11))


TEMPLATE = SolverConfig(max_iters=150)


def test_folds_partition_the_rows():
    folds, rest = cv_folds(23, 5, seed=3)
    assert [len(f) for f in folds] == [4] * 5 and len(rest) == 3
    allidx = np.concatenate(folds + [rest])
    np.testing.assert_array_equal(np.sort(allidx), np.arange(23))
    # remainder rows only train, and only for the last fold
    train_last = _train_index(folds, rest, 4)
    assert set(rest) <= set(train_last)
    assert not set(rest) & set(_train_index(folds, rest, 0))


def test_fold_errors():
    with pytest.raises(ParameterError):
        cv_folds(10, 1, 0)
    with pytest.raises(ParameterError):
        cv_folds(3, 5, 0)


def test_single_cell_grid_refits_the_plain_fit(small_clean):
    spec = CvSpec(grid_K=(1,), grid_lambda=(0.0,), K_prime=1)
    res = mom_cv(small_clean, TEMPLATE, spec)
    assert (res.best_K, res.best_lambda) == (1, 0.0)
    ref = fit(small_clean, TEMPLATE.with_(K=1, lam=0.0, seed=_fit_seed(0, _REFIT_STREAM)))
    assert res.estimate.t_hat.tobytes() == ref.t_hat.tobytes()


def test_clean_data_selects_few_blocks():
    ds = generate(GenSpec(N_good=200, d=100, s=10, seed=5))
    lams = tuple(np.arange(0, 6) / np.sqrt(200))
    res = mom_cv(ds, TEMPLATE, CvSpec(grid_K=(1, 2, 4, 8), grid_lambda=lams))
    assert res.best_K in (1, 2)


def test_best_pair_minimizes_the_table(small_clean):
    spec = CvSpec(grid_K=(1, 2, 4), grid_lambda=(0.0, 0.1, 0.3), K_prime=2)
    res = mom_cv(small_clean, TEMPLATE, spec)
    i, j = res.grid_K.index(res.best_K), res.grid_lambda.index(res.best_lambda)
    assert res.criterion_table[i, j] == res.criterion_table.min()
    np.testing.assert_array_equal(res.criterion_table, np.median(res.fold_details, axis=2))
    assert res.failures == []


def test_criterion_ties_prefer_smaller_K_then_lambda(small_clean, monkeypatch):
    import momreg.tuning as tuning
    monkeypatch.setattr(tuning, "_fold_job", lambda job: [1.0] * len(job[2]))
    res = tuning.mom_cv(small_clean, TEMPLATE, CvSpec(grid_K=(4, 2), grid_lambda=(0.3, 0.1)))
    assert (res.best_K, res.best_lambda) == (2, 0.1)


def test_single_test_block_is_the_mean_test_loss(small_clean):
    spec = CvSpec(V=4, grid_K=(2,), grid_lambda=(0.2,), K_prime=1, seed=9)
    res = mom_cv(small_clean, TEMPLATE, spec)
    folds, rest = cv_folds(small_clean.n_samples, 4, 9)
    for v in range(4):
        train = small_clean.subset(_train_index(folds, rest, v))
        test = small_clean.subset(folds[v])
        t = fit(train, TEMPLATE.with_(K=2, lam=0.2, seed=_cell_seed(9, v, 2, 0.2))).t_hat
        mean_loss = np.mean((test.response - test.design @ t) ** 2)
        assert res.fold_details[0, 0, v] == pytest.approx(mean_loss, rel=1e-12)
        assert mom_test_loss(test, t, 1) == pytest.approx(mean_loss, rel=1e-12)


def test_table_follows_grid_permutations(small_clean):
    spec = CvSpec(grid_K=(1, 2, 4), grid_lambda=(0.0, 0.15, 0.4), K_prime=2, seed=2)
    a = mom_cv(small_clean, TEMPLATE, spec)
    b = mom_cv(small_clean, TEMPLATE, CvSpec(grid_K=(4, 1, 2), grid_lambda=(0.4, 0.0, 0.15),
                                             K_prime=2, seed=2))
    pk, pl = [2, 0, 1], [2, 0, 1]
    np.testing.assert_array_equal(b.criterion_table, a.criterion_table[np.ix_(pk, pl)])
    assert (a.best_K, a.best_lambda) == (b.best_K, b.best_lambda)


def test_parallel_matches_serial(small_clean):
    spec = CvSpec(grid_K=(1, 2), grid_lambda=(0.0, 0.2), K_prime=2)
    a = mom_cv(small_clean, TEMPLATE, spec, n_jobs=1)
    b = mom_cv(small_clean, TEMPLATE, spec, n_jobs=2)
    np.testing.assert_array_equal(a.criterion_table, b.criterion_table)


def test_cv_infeasible_settings(small_clean):
    for spec in (CvSpec(grid_K=()), CvSpec(grid_K=(0,)), CvSpec(grid_lambda=(-1.0,)),
                 CvSpec(K_prime=50), CvSpec(grid_K=(90,))):
        with pytest.raises(ParameterError):
            mom_cv(small_clean, TEMPLATE, spec)


def test_default_test_blocks():
    assert CvSpec().resolved_K_prime() == 32 // 5
    assert CvSpec(grid_K=(1, 2), V=5).resolved_K_prime() == 1


def test_cv_table_csv(tmp_path, small_clean):
    res = mom_cv(small_clean, TEMPLATE, CvSpec(grid_K=(1, 2), grid_lambda=(0.0, 0.1), K_prime=1))
    path = tmp_path / "cv.csv"
    res.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "K,lambda,criterion" and len(lines) == 5


# -- formulas -----------------------------------------------------------------

def test_recommended_lambda_examples():
    assert recommended_lambda(1.0, 7, 50, 7, c=2.0) == pytest.approx(2.0 * math.sqrt(1 / 50))
    assert recommended_lambda(1.0, 500, 200, 10) == pytest.approx(math.sqrt(math.log(math.e * 50) / 200))
    with pytest.raises(ParameterError):
        recommended_lambda(0.1, 10, 100, 10)


def test_minimax_rate_examples():
    assert minimax_rate(2.0, 30, 30, 60) == pytest.approx(4.0 * 30 / 60)
    assert minimax_rate(1.0, 10, 500, 200) == pytest.approx(10 * math.log(50 * math.e) / 200)
    with pytest.raises(ParameterError):
        minimax_rate(1.0, 11, 10, 100)


@settings(max_examples=50)
@given(st.floats(0.5, 10), st.integers(10, 10000), st.integers(10, 10**5), st.integers(1, 5))
def test_formula_homogeneity(sigma, d, N, K):
    lam = recommended_lambda(sigma, d, N, K)
    assert recommended_lambda(sigma, d, 2 * N, K) == pytest.approx(lam / math.sqrt(2), rel=1e-12)
    assert recommended_lambda(sigma, d, N, K, c=3.0) == pytest.approx(3 * lam, rel=1e-12)
    s = min(d, 5)
    rate = minimax_rate(sigma, s, d, N)
    assert minimax_rate(2 * sigma, s, d, N) == pytest.approx(4 * rate, rel=1e-12)
    assert minimax_rate(sigma, s, d, 3 * N) == pytest.approx(rate / 3, rel=1e-12)


# -- breakdown probe ----------------------------------------------------------

PROBE_GEN = GenSpec(N_good=200, d=500, s=10, seed=0)
LASSO = SolverConfig(K=1, lam=1 / math.sqrt(200))


@pytest.fixture(scope="module")
def lasso_clean_error():
    errs = []
    for r in range(5):
        ds = generate(GenSpec(N_good=200, d=500, s=10, seed=r))
        errs.append(ell2_error(fit(ds, LASSO).t_hat, ds.truth))
    return float(np.median(errs))


def test_lasso_breaks_at_one_outlier(lasso_clean_error):
    res = breakdown_probe(PROBE_GEN, LASSO, 10 * lasso_clean_error, reps=5, m_max=3)
    assert res.broken and res.m == 1
    assert [row[0] for row in res.report] == [0, 1]


def test_unreachable_rate_is_not_broken():
    res = breakdown_probe(GenSpec(N_good=40, d=10, s=2), SolverConfig(K=1, max_iters=50),
                          1e300, reps=2, m_max=2)
    assert not res.broken and res.m == 2 and len(res.report) == 3


def test_probe_is_monotone_in_rate(lasso_clean_error):
    spec = GenSpec(N_good=60, d=20, s=3)
    est = SolverConfig(K=1, lam=0.1, max_iters=100)
    ms = [breakdown_probe(spec, est, R, reps=3, m_max=4).m for R in (0.01, 0.5, 5.0, 1e4)]
    assert ms == sorted(ms)


def test_probe_accepts_callables(tmp_path):
    res = breakdown_probe(GenSpec(N_good=30, d=5, s=2), lambda ds: np.zeros(5), 1.0, reps=2, m_max=1)
    assert res.broken and res.m == 0
    res.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().splitlines()[0] == "m,median_error,broken"
    with pytest.raises(ParameterError):
        breakdown_probe(GenSpec(), LASSO, 0.0)
