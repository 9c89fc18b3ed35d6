"""Experiment configuration, batch execution, and report comparison.

A run is described by a JSON config (generator, method, options, seed),
executes one method, and writes CSV/JSON artifacts plus companion figures
into the output directory. Reruns of the same config produce byte-identical
CSV artifacts; wall-clock timings live in the run summary only.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import generators as gen
from . import plots, report
from .errors import ConfigError
from .formats import tt_svd
from .greedy import TrainSet, strong_greedy, weak_greedy
from .reduction import ErrorReport, SnapshotSet, pod, project, width_l2
from .regression import (
    FeatureBasis,
    SampleSet,
    cp_als_fit,
    cross_validate,
    grid_project,
    predict,
)
from .rom import ParametricLinearModel, build_reduced, full_solve
from .serialization import atomic_write_text, write_lrtf, write_snapshots
from .solver import (
    affine_rhs_cp,
    assemble_from_affine,
    greedy_rank_one,
    truncated_richardson,
)

METHODS = ("pod", "strong-greedy", "weak-greedy", "rom", "richardson",
           "pgd", "regress", "ttsvd")

_MODEL_METHODS = ("pod", "strong-greedy", "weak-greedy", "rom", "richardson",
                  "pgd")
_SEEDED_METHODS = ("pod", "strong-greedy", "weak-greedy", "rom", "pgd",
                   "regress")


def load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _positive_int(options, key, default):
    value = options.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"option {key!r} must be a positive integer")
    return value


def _nonneg_float(options, key, default):
    value = options.get(key, default)
    if not isinstance(value, (int, float)) or isinstance(value, bool) \
            or value < 0:
        raise ConfigError(f"option {key!r} must be a nonnegative number")
    return float(value)


def validate_config(config: dict, method=None, seed_override=None):
    """Normalize and validate; returns (method, seed, generator, options)."""
    cfg_method = config.get("method", method)
    if cfg_method is None:
        raise ConfigError("no method given in config or on the command line")
    if method is not None and cfg_method != method:
        raise ConfigError(
            f"config method {cfg_method!r} conflicts with subcommand "
            f"{method!r}"
        )
    if cfg_method not in METHODS:
        raise ConfigError(f"unknown method {cfg_method!r}")
    problem = config.get("problem")
    if not isinstance(problem, dict) or "generator" not in problem:
        raise ConfigError("config requires problem.generator")
    name = problem["generator"]
    params = problem.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("problem.params must be an object")
    try:
        instance = gen.make_generator(name, **params)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters for generator {name!r}: {exc}") \
            from exc
    is_model = isinstance(instance, ParametricLinearModel)
    if cfg_method in _MODEL_METHODS and not is_model:
        raise ConfigError(
            f"method {cfg_method!r} needs an affine model generator, "
            f"got {name!r}"
        )
    if cfg_method not in _MODEL_METHODS and is_model:
        raise ConfigError(
            f"method {cfg_method!r} needs a function generator, got {name!r}"
        )
    seed = seed_override if seed_override is not None else config.get("seed")
    if cfg_method in _SEEDED_METHODS and seed is None:
        raise ConfigError(f"method {cfg_method!r} requires a seed")
    if seed is not None and (not isinstance(seed, int)
                             or isinstance(seed, bool) or seed < 0):
        raise ConfigError("seed must be a nonnegative integer")
    options = config.get("options", {})
    if not isinstance(options, dict):
        raise ConfigError("options must be an object")
    return cfg_method, 0 if seed is None else seed, instance, options


def _sample_snapshots(model, count, seed):
    rng = np.random.default_rng(seed)
    points = model.domain.sample(count, rng)
    columns = np.stack([full_solve(model, xi) for xi in points], axis=1)
    return SnapshotSet(columns, params=points)


def run(config: dict, out_dir, method=None, seed=None, verbose=False,
        figures=True) -> dict:
    """Execute one experiment; returns the summary dictionary."""
    cfg_method, used_seed, instance, options = validate_config(
        config, method=method, seed_override=seed
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    effective = dict(config)
    effective["method"] = cfg_method
    effective["seed"] = used_seed
    start = time.perf_counter()
    runner = _RUNNERS[cfg_method]
    artifacts = runner(instance, options, used_seed, out, figures, verbose)
    timings = {"total_seconds": time.perf_counter() - start}
    summary_path = out / "summary.json"
    report.write_summary(summary_path, effective, artifacts, timings)
    artifacts.append(str(summary_path.name))
    if verbose:
        for name in sorted(artifacts):
            print(f"wrote {out / name}")
    return {"method": cfg_method, "seed": used_seed,
            "artifacts": sorted(artifacts), "out_dir": str(out)}


def _run_pod(model, options, seed, out, figures, verbose):
    count = _positive_int(options, "train_count", 100)
    m = _positive_int(options, "m", 10)
    snaps = _sample_snapshots(model, count, seed)
    space, err_report = pod(snaps, m)
    report.error_report_csv(out / "pod.csv", err_report,
                            deterministic_timings=True)
    write_lrtf(out / "pod_basis.lrtf", space.basis)
    artifacts = ["pod.csv", "pod_basis.lrtf"]
    if options.get("save_snapshots", False):
        write_snapshots(out / "snapshots.lrtf", snaps)
        artifacts += ["snapshots.lrtf", "snapshots.lrtf.json"]
    if figures:
        plots.save_error_figure(out / "pod.png", err_report,
                                title="POD error decay", label="pod")
        artifacts.append("pod.png")
    return artifacts


def _run_strong_greedy(model, options, seed, out, figures, verbose):
    count = _positive_int(options, "train_count", 100)
    m = _positive_int(options, "m", 10)
    snaps = _sample_snapshots(model, count, seed)
    result = strong_greedy(snaps, m)
    report.error_report_csv(out / "strong_greedy.csv", result.report,
                            deterministic_timings=True)
    atomic_write_text(out / "strong_greedy.json", result.to_json())
    write_lrtf(out / "strong_greedy_basis.lrtf", result.space.basis)
    artifacts = ["strong_greedy.csv", "strong_greedy.json",
                 "strong_greedy_basis.lrtf"]
    if figures:
        plots.save_error_figure(out / "strong_greedy.png", result.report,
                                title="Strong greedy max error",
                                label="greedy")
        artifacts.append("strong_greedy.png")
    return artifacts


def _run_weak_greedy(model, options, seed, out, figures, verbose):
    count = _positive_int(options, "train_count", 100)
    m = _positive_int(options, "m", 10)
    indicator = options.get("indicator", "residual")
    if indicator not in ("exact", "residual"):
        raise ConfigError(f"unknown indicator {indicator!r}")
    rng = np.random.default_rng(seed)
    train = TrainSet(model.domain.sample(count, rng))
    result = weak_greedy(model, indicator, train, m)
    report.error_report_csv(out / "weak_greedy.csv", result.report,
                            deterministic_timings=True)
    atomic_write_text(out / "weak_greedy.json", result.to_json())
    write_lrtf(out / "weak_greedy_basis.lrtf", result.space.basis)
    artifacts = ["weak_greedy.csv", "weak_greedy.json",
                 "weak_greedy_basis.lrtf"]
    if figures:
        plots.save_error_figure(out / "weak_greedy.png", result.report,
                                title="Weak greedy indicator",
                                label=indicator)
        artifacts.append("weak_greedy.png")
    return artifacts


def _run_rom(model, options, seed, out, figures, verbose):
    count = _positive_int(options, "train_count", 100)
    m = _positive_int(options, "m", 10)
    n_test = _positive_int(options, "test_count", 20)
    snaps = _sample_snapshots(model, count, seed)
    space, _ = pod(snaps, m)
    rm = build_reduced(model, space)
    rng = np.random.default_rng(seed + 1)
    test_points = model.domain.sample(n_test, rng)
    rows = []
    deltas, trues = [], []
    for k, xi in enumerate(test_points):
        s, delta, _ = rm.solve(xi)
        u = full_solve(model, xi)
        true_err = float(np.linalg.norm(u - rm.lift(s)))
        rows.append((k, delta, true_err))
        deltas.append(delta)
        trues.append(true_err)
    report.write_csv(out / "rom.csv", ("xi_index", "delta", "true_error"),
                     rows)
    from .serialization import write_reduced_model

    write_reduced_model(out / "reduced_model", rm)
    artifacts = ["rom.csv", "reduced_model/basis.lrtf",
                 "reduced_model/gram.lrtf", "reduced_model/cross.lrtf",
                 "reduced_model/rhs_gram.lrtf", "reduced_model/reduced.json"]
    if figures:
        plots.save_pair_figure(
            out / "rom.png", list(range(n_test)),
            {"residual indicator": deltas, "true error": trues},
            xlabel="test point", ylabel="error",
            title=f"Online ROM accuracy (m={m})",
        )
        artifacts.append("rom.png")
    return artifacts


def _tensorize(model, options):
    n_grid = _positive_int(options, "grid_points", 8)
    grids = [np.linspace(lo, hi, n_grid) for lo, hi in model.domain.box]
    op, rhs_tt = assemble_from_affine(model, grids)
    return op, rhs_tt, grids


def _run_richardson(model, options, seed, out, figures, verbose):
    op, rhs_tt, _ = _tensorize(model, options)
    eps = _nonneg_float(options, "eps", 1e-8)
    maxit = _positive_int(options, "maxit", 200)
    target = _nonneg_float(options, "target_resid", 1e-6)
    step = options.get("step")
    if step is None and model.alpha_lb is not None \
            and model.beta_ub is not None:
        step = 2.0 / (model.alpha_lb + model.beta_ub)
    _, trace = truncated_richardson(op, rhs_tt, step=step, eps=eps,
                                    maxit=maxit, target_resid=target)
    report.trace_csv(out / "richardson.csv", trace,
                     deterministic_timings=True)
    artifacts = ["richardson.csv"]
    if figures:
        plots.save_trace_figure(out / "richardson.png", trace,
                                title=f"Truncated Richardson (eps={eps:g})")
        artifacts.append("richardson.png")
    return artifacts


def _run_pgd(model, options, seed, out, figures, verbose):
    op, _, grids = _tensorize(model, options)
    rhs_cp = affine_rhs_cp(model, grids)
    m_max = _positive_int(options, "m_max", 10)
    sweeps = _positive_int(options, "inner_sweeps", 20)
    tol = _nonneg_float(options, "tol", 1e-10)
    _, trace = greedy_rank_one(op, rhs_cp, m_max=m_max, inner_sweeps=sweeps,
                               tol=tol, seed=seed)
    report.trace_csv(out / "pgd.csv", trace, deterministic_timings=True)
    artifacts = ["pgd.csv"]
    if figures:
        plots.save_trace_figure(out / "pgd.png", trace,
                                title="Greedy rank-one corrections")
        artifacts.append("pgd.png")
    return artifacts


def _run_regress(fn, options, seed, out, figures, verbose):
    count = _positive_int(options, "train_count", 500)
    degree = _positive_int(options, "degree", 3)
    rank = _positive_int(options, "rank", 2)
    ridge = _nonneg_float(options, "ridge", 0.0)
    sweeps = _positive_int(options, "sweeps", 30)
    n_test = _positive_int(options, "test_count", 200)
    d = fn.dim
    box = fn.domain.box
    samples = SampleSet.from_function(fn, box, count, seed)
    basis = FeatureBasis.uniform(d, degree, interval=box[0])
    holdout = SampleSet.from_function(fn, box, n_test, seed + 1)
    artifacts = []
    cv_cfg = options.get("cross_validate")
    if cv_cfg:
        ranks = cv_cfg.get("ranks", [1, 2, 3])
        ridges = cv_cfg.get("ridges", [0.0])
        folds = cv_cfg.get("folds", 5)
        cv = cross_validate(samples, basis, ranks, ridges, folds=folds,
                            seed=seed, sweeps=sweeps)
        report.write_csv(out / "regress_cv.csv", ("rank", "ridge", "rmse"),
                         cv.table)
        artifacts.append("regress_cv.csv")
        rank, ridge = cv.best_rank, cv.best_ridge
    coeffs, fit = cp_als_fit(samples, basis, rank, ridge=ridge,
                             sweeps=sweeps, seed=seed, holdout=holdout)
    sample_rows = [tuple(p) + (y,) for p, y in
                   zip(samples.points, samples.values)]
    header = tuple(f"xi_{j + 1}" for j in range(d)) + ("y",)
    report.write_csv(out / "samples.csv", header, sample_rows)
    atomic_write_text(out / "regress.json",
                      json.dumps(fit.to_dict(), indent=2) + "\n")
    artifacts += ["samples.csv", "regress.json"]
    if figures:
        history = fit.objective_history
        plots.save_pair_figure(
            out / "regress.png", list(range(len(history))),
            {"objective": history}, xlabel="mode update",
            ylabel="objective", title=f"CP-ALS fit (rank {fit.rank})",
        )
        artifacts.append("regress.png")
    return artifacts


def _run_ttsvd(fn, options, seed, out, figures, verbose):
    n_grid = _positive_int(options, "grid_points", 8)
    tol = _nonneg_float(options, "tol", 1e-10)
    d = fn.dim
    box = fn.domain.box
    basis = FeatureBasis.uniform(d, n_grid - 1, interval=box[0])
    grids = [np.linspace(lo, hi, n_grid) for lo, hi in box]
    values = grid_project(fn, basis, grids, mode="interpolation")
    tt = tt_svd(values, tol)
    err = float(np.linalg.norm(tt.to_dense().array - values.array))
    rel = err / max(values.norm(), 1e-300)
    rows = [(k + 1, r) for k, r in enumerate(tt.ranks)]
    report.write_csv(out / "ttsvd.csv", ("split", "rank"), rows)
    atomic_write_text(
        out / "ttsvd.json",
        json.dumps({"ranks": list(tt.ranks), "relative_error": rel,
                    "storage": tt.storage_count(),
                    "dense_entries": values.size}, indent=2) + "\n",
    )
    artifacts = ["ttsvd.csv", "ttsvd.json"]
    if figures:
        plots.save_pair_figure(
            out / "ttsvd.png", [r[0] for r in rows],
            {"TT rank": [r[1] for r in rows]}, xlabel="split",
            ylabel="rank", title=f"TT ranks at tol={tol:g}",
        )
        artifacts.append("ttsvd.png")
    return artifacts


_RUNNERS = {
    "pod": _run_pod,
    "strong-greedy": _run_strong_greedy,
    "weak-greedy": _run_weak_greedy,
    "rom": _run_rom,
    "richardson": _run_richardson,
    "pgd": _run_pgd,
    "regress": _run_regress,
    "ttsvd": _run_ttsvd,
}


def compare(path_a, path_b, factor: float = 2.0) -> dict:
    """Row-wise ratio comparison of two reports sharing a schema.

    Returns per-key ratios (column ``error`` or ``resid``, keyed by the
    first column) and flags entries where the second report is worse than
    the first by more than ``factor``.
    """
    header_a, rows_a = report.read_csv(path_a)
    header_b, rows_b = report.read_csv(path_b)
    if not rows_a or not rows_b:
        raise ConfigError("cannot compare empty reports")
    if header_a != header_b:
        raise ConfigError(
            f"report schemas differ: {header_a} vs {header_b}"
        )
    for column in ("error", "resid"):
        if column in header_a:
            value_col = header_a.index(column)
            break
    else:
        raise ConfigError(f"no error column in schema {header_a}")
    a_map = {row[0]: float(row[value_col]) for row in rows_a}
    b_map = {row[0]: float(row[value_col]) for row in rows_b}
    shared = [k for k in a_map if k in b_map]
    if not shared:
        raise ConfigError("reports share no rows to compare")
    entries = []
    regressions = []
    for key in shared:
        va, vb = a_map[key], b_map[key]
        ratio = vb / va if va != 0 else (1.0 if vb == 0 else float("inf"))
        entries.append({"key": key, "a": va, "b": vb, "ratio": ratio})
        if ratio > factor:
            regressions.append(key)
    return {
        "column": header_a[value_col],
        "entries": entries,
        "regressions": regressions,
        "factor": factor,
    }
