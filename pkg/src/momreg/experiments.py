"""Experiment drivers that write their results as CSV tables.

Every driver takes an :class:`ExperimentConfig` and an output directory.
Repetition ``r`` uses data seed ``gen.seed + r`` and solver / CV seeds
``seed + r``, so any single row can be replayed on its own. Summaries
are computed by reading back the per-repetition CSV, which keeps them
recomputable from the artifacts alone.
"""
import os
from dataclasses import replace

import numpy as np

from ._io import read_csv, write_csv
from .config import describe
from .dataset import ell2_error, from_csv, generate, with_outliers
from .exceptions import NumericError
from .outlier_detect import depth_scores, flag_outliers
from .solvers import duality_gap, fit
from .tuning import breakdown_probe, mom_cv

SWEEP_HEADER = ["fraction", "repetition", "n_outliers", "error_lasso", "lambda_lasso",
                "error_mom", "K_hat", "lambda_hat", "errors"]
ERROR_SUMMARY_HEADER = ["fraction", "mean_error_lasso", "mean_error_mom",
                        "median_error_lasso", "median_error_mom", "failed"]


def n_outliers(fraction, n_good):
    """Number of gross outliers added for a given fraction of the informative rows."""
    return int(round(fraction * n_good))


def repetition_data(gen, r, outliers=None):
    spec = gen if outliers is None else with_outliers(gen, outliers)
    return generate(replace(spec, seed=gen.seed + r))


def lasso_cv_spec(cv):
    """Plain V-fold CV on lambda: a single block and a mean test loss."""
    return replace(cv, grid_K=(1,), K_prime=1)


def _nan():
    return float("nan")


def sweep_row(config, fraction, r, with_lasso=True, n_jobs=1):
    """One repetition of the outlier sweep: LASSO and MOM-LASSO, both CV-tuned."""
    m = n_outliers(fraction, config.gen.N_good)
    ds = repetition_data(config.gen, r, m)
    cv = replace(config.cv, seed=config.cv.seed + r)
    solver = config.solver.with_(seed=config.solver.seed + r)
    row = {"fraction": float(fraction), "repetition": r, "n_outliers": m,
           "error_lasso": _nan(), "lambda_lasso": _nan(),
           "error_mom": _nan(), "K_hat": "", "lambda_hat": _nan(), "errors": ""}
    problems = []
    if with_lasso:
        try:
            res = mom_cv(ds, solver, lasso_cv_spec(cv), n_jobs)
            row["error_lasso"] = ell2_error(res.estimate.t_hat, ds.truth)
            row["lambda_lasso"] = res.best_lambda
        except NumericError as exc:
            problems.append(f"lasso: {exc}")
    try:
        res = mom_cv(ds, solver, cv, n_jobs)
        row["error_mom"] = ell2_error(res.estimate.t_hat, ds.truth)
        row["K_hat"] = res.best_K
        row["lambda_hat"] = res.best_lambda
    except NumericError as exc:
        problems.append(f"mom: {exc}")
    row["errors"] = "; ".join(problems)
    return row


def outlier_sweep(config, with_lasso=True, n_jobs=1, progress=None):
    """All ``(fraction, repetition)`` rows of the outlier sweep."""
    rows = []
    for fraction in config.outlier_fractions:
        for r in range(config.repetitions):
            rows.append(sweep_row(config, fraction, r, with_lasso, n_jobs))
            if progress is not None:
                progress(rows[-1])
    return rows


def write_sweep(rows, path):
    write_csv(path, SWEEP_HEADER, [[row[k] for k in SWEEP_HEADER] for row in rows])


def read_sweep(path):
    header, rows = read_csv(path)
    out = []
    for r in rows:
        rec = dict(zip(header, r))
        for k in ("fraction", "error_lasso", "lambda_lasso", "error_mom", "lambda_hat"):
            rec[k] = float(rec[k])
        rec["repetition"] = int(rec["repetition"])
        rec["n_outliers"] = int(rec["n_outliers"])
        rec["K_hat"] = int(rec["K_hat"]) if rec["K_hat"] else None
        out.append(rec)
    return out


def _by_fraction(rows):
    groups = {}
    for rec in rows:
        groups.setdefault(rec["fraction"], []).append(rec)
    return groups


def _stat(fn, values):
    values = np.array([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    return float(fn(values)) if values.size else _nan()


def summarize_errors(rows):
    out = []
    for fraction, group in _by_fraction(rows).items():
        lasso = [g["error_lasso"] for g in group]
        mom = [g["error_mom"] for g in group]
        out.append([fraction, _stat(np.mean, lasso), _stat(np.mean, mom),
                    _stat(np.median, lasso), _stat(np.median, mom),
                    sum(1 for g in group if g["errors"])])
    return out


def summarize_selection(rows, key):
    out = []
    for fraction, group in _by_fraction(rows).items():
        vals = [float(g[key]) if g[key] is not None else None for g in group]
        out.append([fraction, _stat(np.median, vals), _stat(np.mean, vals)])
    return out


def _load(config, r):
    if config.data:
        return from_csv(config.data)
    return repetition_data(config.gen, r)


def run_single_fit(config, out):
    rows, paths = [], []
    for r in range(config.repetitions):
        ds = _load(config, r)
        solver = config.solver.with_(seed=config.solver.seed + r)
        try:
            est = fit(ds, solver)
        except NumericError as exc:
            rows.append([r, _nan(), "", "", _nan(), str(exc)])
            continue
        err = ell2_error(est.t_hat, ds.truth) if ds.truth is not None else _nan()
        rows.append([r, err, int(est.converged), est.iterations_used, duality_gap(est.trace), ""])
        if r == 0:
            t_star = ds.truth.t_star if ds.truth is not None else np.full(ds.n_features, np.nan)
            write_csv(os.path.join(out, "estimate.csv"), ["index", "t_hat", "t_adv", "t_star"],
                      [(j, float(a), float(b), float(c))
                       for j, (a, b, c) in enumerate(zip(est.t_hat, est.t_adv, t_star))])
            paths += [os.path.join(out, "estimate.csv"), os.path.join(out, "trace.csv")]
            est.trace.to_csv(paths[-1])
    path = os.path.join(out, "single_fit.csv")
    write_csv(path, ["repetition", "error", "converged", "iterations", "final_objective", "errors"], rows)
    return [path] + paths


def run_error_vs_outliers(config, out, n_jobs=1):
    per_rep = os.path.join(out, "error_vs_outliers_repetitions.csv")
    write_sweep(outlier_sweep(config, True, n_jobs), per_rep)
    summary = os.path.join(out, "error_vs_outliers.csv")
    write_csv(summary, ERROR_SUMMARY_HEADER, summarize_errors(read_sweep(per_rep)))
    return [per_rep, summary]


def run_adaptive(config, out, key, n_jobs=1):
    name = "adaptive_k" if key == "K_hat" else "adaptive_lambda"
    per_rep = os.path.join(out, f"{name}_repetitions.csv")
    write_sweep(outlier_sweep(config, False, n_jobs), per_rep)
    summary = os.path.join(out, f"{name}.csv")
    write_csv(summary, ["fraction", f"median_{key}", f"mean_{key}"],
              summarize_selection(read_sweep(per_rep), key))
    return [per_rep, summary]


def compare_block_policies(ds, solver):
    """Fit with fixed and with random blocks, recording objective and error per iteration."""
    result = {}
    for mode in ("fixed", "random-each-step"):
        errors = []
        cfg = solver.with_(block_policy=replace(solver.block_policy, mode=mode))
        est = fit(ds, cfg, callback=lambda p, t, tp: errors.append(ell2_error(t, ds.truth)))
        result[mode] = (est, errors)
    return result


def run_fixed_vs_random(config, out):
    summary_rows, paths = [], []
    for r in range(config.repetitions):
        ds = _load(config, r)
        solver = config.solver.with_(seed=config.solver.seed + r)
        try:
            res = compare_block_policies(ds, solver)
        except NumericError as exc:
            summary_rows.append([r, _nan(), _nan(), _nan(), _nan(), str(exc)])
            continue
        (fe, ferr), (re_, rerr) = res["fixed"], res["random-each-step"]
        n = max(len(ferr), len(rerr))
        pad = lambda xs, i: xs[i] if i < len(xs) else ""  # noqa: E731
        rows = [[p, pad(fe.trace.objective, p), pad(ferr, p), pad(re_.trace.objective, p), pad(rerr, p)]
                for p in range(n)]
        path = os.path.join(out, f"fixed_vs_random_rep{r}.csv")
        write_csv(path, ["iter", "objective_fixed", "error_fixed", "objective_random", "error_random"], rows)
        paths.append(path)
        summary_rows.append([r, abs(duality_gap(fe.trace)), abs(duality_gap(re_.trace)),
                             ferr[-1], rerr[-1], ""])
    summary = os.path.join(out, "fixed_vs_random.csv")
    write_csv(summary, ["repetition", "final_gap_fixed", "final_gap_random",
                        "final_error_fixed", "final_error_random", "errors"], summary_rows)
    return paths + [summary]


def run_detect(config, out):
    rows, paths = [], []
    for r in range(config.repetitions):
        ds = _load(config, r)
        solver = config.solver.with_(seed=config.solver.seed + r)
        try:
            scores = depth_scores(ds, solver)
        except NumericError as exc:
            rows.append([r, "", "", "", "", "", str(exc)])
            continue
        path = os.path.join(out, f"scores_rep{r}.csv")
        scores.to_csv(path, ds.labels)
        paths.append(path)
        zero = flag_outliers(scores, "zero-score").indices
        gap = flag_outliers(scores, "largest-gap").indices
        if ds.labels is not None:
            bad = ds.outlier_mask()
            outliers_zero = int(np.all(scores.counts[bad] == 0))
            informative_positive = int(np.all(scores.counts[~bad] > 0))
            n_bad = int(bad.sum())
        else:
            outliers_zero = informative_positive = n_bad = ""
        rows.append([r, n_bad, len(zero), len(gap), outliers_zero, informative_positive, ""])
    summary = os.path.join(out, "detect_outliers.csv")
    write_csv(summary, ["repetition", "n_outliers", "n_zero_score", "n_largest_gap",
                        "outliers_all_zero", "informative_all_positive", "errors"], rows)
    return paths + [summary]


def breakdown_estimator(config, n_jobs=1):
    """MOM-CV tuned estimator when a [cv] section is given, else the plain solver."""
    if config.cv is None:
        return config.solver
    return lambda ds: mom_cv(ds, config.solver, config.cv, n_jobs).estimate.t_hat


def run_breakdown(config, out, n_jobs=1):
    estimator = breakdown_estimator(config, n_jobs)
    rate = config.breakdown.rate
    if rate is None:
        clean = []
        for r in range(config.repetitions):
            ds = repetition_data(config.gen, r, 0)
            t = fit(ds, estimator).t_hat if not callable(estimator) else estimator(ds)
            clean.append(ell2_error(t, ds.truth))
        rate = 10.0 * float(np.median(clean))
    res = breakdown_probe(with_outliers(config.gen, 0), estimator, rate,
                          config.repetitions, config.breakdown.m_max)
    report = os.path.join(out, "breakdown_report.csv")
    res.to_csv(report)
    summary = os.path.join(out, "breakdown.csv")
    write_csv(summary, ["breakdown_number", "broken", "rate"], [[res.m, int(res.broken), float(rate)]])
    return [report, summary]


def run(config, out_dir=None, n_jobs=1):
    """Execute ``config.experiment``; returns the list of written files."""
    out = out_dir or config.output_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(describe(config))
    kind = config.experiment
    if kind == "single-fit":
        return run_single_fit(config, out)
    if kind == "error-vs-outliers":
        return run_error_vs_outliers(config, out, n_jobs)
    if kind == "adaptive-k":
        return run_adaptive(config, out, "K_hat", n_jobs)
    if kind == "adaptive-lambda":
        return run_adaptive(config, out, "lambda_hat", n_jobs)
    if kind == "fixed-vs-random":
        return run_fixed_vs_random(config, out)
    if kind == "detect-outliers":
        return run_detect(config, out)
    return run_breakdown(config, out, n_jobs)

