"""Experiment orchestration: dispatch, threading, and CSV/JSON emission.

Every run produces ``<out_path>.csv`` (one header line plus one ResultRow
per line, floats at 17 significant digits) and ``<out_path>.json`` (the
resolved config, the same rows as typed values, and any aggregates). Reruns
with the same config and seed are byte-identical except for the wall-time
column. Worker threads fan out over trial indices into an indexed buffer;
the reduction is always serial and in trial order, so the thread count
never changes a metric value.
"""

import csv
import json
import math
import os
import secrets
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from ._version import __version__
from .config import RunConfig, build_family, build_noise
from .diagnostics import (
    cone_escape_fraction,
    estimate_critical_measure,
    strong_coupling_min_residual,
    transversality_residual,
    uniformity_check,
)
from .exceptions import ConfigError, KickedTorusError
from .grassmann import d_geodesic, d_hausdorff, haar_random_subspace, orthonormalize
from .lyapunov import qr_spectrum
from .noise import check_cone_condition, check_nd_spread
from .streams import derive_stream

# grid and refinement depths for the transversality experiment
_UNCOUPLED_GRID = 64
_STRONG_GRID = 512
_SYSTEM_GRID = 2048
_REFINE_ITERS = 12


@dataclass(frozen=True)
class ResultRow:
    """One output record; the CSV columns are these fields in this order."""

    experiment: str
    family_variant: Optional[str]
    family_n: Optional[int]
    family_l: Optional[float]
    family_mu: Optional[str]
    family_a: Optional[str]
    noise_variant: Optional[str]
    noise_mode: Optional[str]
    noise_per_axis: Optional[int]
    noise_c: Optional[float]
    noise_zeta: Optional[float]
    noise_epsilon: Optional[float]
    n_steps: int
    trials: int
    beta: float
    seed: int
    out_path: str
    threads: int
    burn_in: int
    metric_names: str
    metric_values: str
    metric_stderrs: str
    wall_time_s: float
    version: str


RESULT_FIELDS = tuple(f.name for f in fields(ResultRow))


def _fmt_float(val):
    return format(float(val), ".17g")


def _fmt_cell(val):
    if val is None:
        return ""
    if isinstance(val, float):
        return _fmt_float(val)
    return str(val)


def _join_metrics(names, values, stderrs):
    """Pack parallel metric lists into the three semicolon-joined cells."""
    vals = ";".join(_fmt_float(v) for v in values)
    errs = ";".join("" if e is None else _fmt_float(e) for e in stderrs)
    return ";".join(names), vals, errs


def _draw_entropy_seed():
    # nonzero so the recorded value never reads as "draw again"
    while True:
        seed = secrets.randbits(64)
        if seed != 0:
            return seed


def _map_trials(fn, trials, threads):
    """fn(t) for t in range(trials), gathered into an indexed buffer."""
    out = [None] * trials
    workers = min(threads, trials)
    if workers <= 1:
        for t in range(trials):
            out[t] = fn(t)
        return out
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, t): t for t in range(trials)}
        for fut in futures:
            out[futures[fut]] = fut.result()
    return out


def _row_base(config, fam=None, l_value=None):
    """Config-echo cells shared by every row of the run."""
    famd = config.family
    noised = config.noise
    return dict(
        experiment=config.experiment,
        family_variant=famd["variant"] if famd else None,
        family_n=fam.N if fam is not None else None,
        family_l=float(fam.L) if fam is not None and famd["variant"] != "LinearTest" else None,
        family_mu=json.dumps(famd["mu"]) if famd and "mu" in famd else None,
        family_a=json.dumps(famd["A"]) if famd and "A" in famd else None,
        noise_variant=noised["variant"] if noised else None,
        noise_mode=noised.get("mode") if noised else None,
        noise_per_axis=noised.get("per_axis") if noised else None,
        noise_c=noised.get("c") if noised else None,
        noise_zeta=noised.get("zeta") if noised else None,
        noise_epsilon=noised.get("epsilon") if noised else None,
        n_steps=config.n_steps,
        trials=config.trials,
        beta=config.beta,
        seed=config.seed,
        out_path=config.out_path,
        threads=config.threads,
        burn_in=config.burn_in,
        version=__version__,
    )


def _finish_row(base, names, values, stderrs, t0):
    mn, mv, me = _join_metrics(names, values, stderrs)
    return ResultRow(
        metric_names=mn,
        metric_values=mv,
        metric_stderrs=me,
        wall_time_s=time.perf_counter() - t0,
        **base,
    )


def _spectrum_rows(config):
    """One row per kick strength; trials fan out over worker threads.

    Start points come from stream indices trials..2*trials-1 so they never
    reuse the per-trial noise streams 0..trials-1 that qr_spectrum derives
    internally.
    """
    rows = []
    aggregates = {}
    lambda1 = []
    for l_value in config.l_values():
        t0 = time.perf_counter()
        fam = build_family(config.family, l_value)
        model = build_noise(config.noise, fam.N)
        d = 2 * fam.N

        def one_trial(t, fam=fam, model=model, d=d):
            z0 = derive_stream(config.seed, config.trials + t).random(d)
            return qr_spectrum(
                z0, fam, model, config.n_steps, config.seed,
                burn_in=config.burn_in, trial_index=t,
            )

        reports = _map_trials(one_trial, config.trials, config.threads)
        exps = np.array([r.exponents for r in reports])
        means = exps.mean(axis=0)
        if config.trials > 1:
            errs = exps.std(axis=0, ddof=1) / math.sqrt(config.trials)
        else:
            errs = reports[0].stderrs
        names = [f"lambda_{i + 1}" for i in range(d)]
        values = list(means)
        stderrs = [float(e) for e in errs]
        names += ["sum_exponents", "max_pairing_gap", "cone_fraction"]
        values += [
            float(np.mean([r.sum_exponents for r in reports])),
            float(max(np.abs(r.pairing_gaps).max() for r in reports)),
            float(np.mean([r.cone_fraction for r in reports])),
        ]
        stderrs += [None, None, None]
        if reports[0].empirical_c0 is not None:
            names.append("empirical_c0")
            values.append(float(max(r.empirical_c0 for r in reports)))
            stderrs.append(None)
        names.append("max_step_volume_drift")
        values.append(float(max(r.max_step_volume_drift for r in reports)))
        stderrs.append(None)
        base = _row_base(config, fam)
        rows.append(_finish_row(base, names, values, stderrs, t0))
        lambda1.append(float(means[0]))
    if config.experiment == "sweep" and len(lambda1) > 1:
        logl = np.log([float(l) for l in config.l_values()])
        aggregates["lambda1_slope_vs_log_l"] = float(
            np.polyfit(logl, lambda1, 1)[0]
        )
    return rows, aggregates


def _f2_rows(config):
    """Critical-set measure per kick strength; n_steps is the sample count."""
    rows = []
    aggregates = {}
    logl = []
    logv = []
    for l_value in config.l_values():
        t0 = time.perf_counter()
        fam = build_family(config.family, l_value)
        est = estimate_critical_measure(fam, config.beta, config.n_steps, config.seed)
        names = ["critical_measure", "n_samples"]
        values = [est.value, float(est.n_samples)]
        stderrs = [est.stderr, None]
        base = _row_base(config, fam)
        rows.append(_finish_row(base, names, values, stderrs, t0))
        if est.value > 0.0:
            logl.append(math.log(fam.L))
            logv.append(math.log(est.value))
    if len(logv) > 1:
        aggregates["measure_slope_vs_log_l"] = float(np.polyfit(logl, logv, 1)[0])
    return rows, aggregates


def _cone_escape_rows(config):
    t0 = time.perf_counter()
    fam = build_family(config.family)
    model = build_noise(config.noise, fam.N)
    est = cone_escape_fraction(
        fam, model, config.beta, config.n_steps, config.trials, config.seed
    )
    reference = fam.L ** (-config.beta * config.n_steps)
    names = ["escape_fraction", "reference_decay", "window_steps"]
    values = [est.value, reference, float(config.n_steps)]
    stderrs = [est.stderr, None, None]
    base = _row_base(config, fam)
    return [_finish_row(base, names, values, stderrs, t0)], {}


def _noise_check_rows(config):
    t0 = time.perf_counter()
    fam = build_family(config.family)
    model = build_noise(config.noise, fam.N)
    cone = check_cone_condition(model, config.trials, seed=config.seed)
    rng = derive_stream(config.seed, 1)
    z = rng.random(2 * fam.N)
    frame = haar_random_subspace(rng, 2 * fam.N, fam.N)
    spread = check_nd_spread(model, z, frame, config.trials, seed=config.seed)
    names = [
        "max_op_norm", "max_inv_norm", "max_graph_norm",
        "op_bound", "graph_bound", "cone_condition_pass",
        "min_point_occupancy", "degenerate_subspace_marginal",
    ]
    values = [
        cone.max_op_norm, cone.max_inv_norm, cone.max_graph_norm,
        cone.op_bound, cone.graph_bound, float(cone.passes),
        float(spread.min_point_occupancy),
        float(spread.degenerate_subspace_marginal),
    ]
    stderrs = [None] * len(values)
    base = _row_base(config, fam)
    return [_finish_row(base, names, values, stderrs, t0)], {}


def _transversality_rows(config):
    t0 = time.perf_counter()
    uncoupled = transversality_residual("uncoupled", _UNCOUPLED_GRID, _REFINE_ITERS)
    strong = transversality_residual("strong-coupling", _STRONG_GRID, _REFINE_ITERS)
    system_min, _ = strong_coupling_min_residual(_SYSTEM_GRID)
    names = [
        "uncoupled_min_residual",
        "strong_coupling_min_residual",
        "system_min_residual",
    ]
    values = [uncoupled.min_residual, strong.min_residual, system_min]
    stderrs = [None, None, None]
    base = _row_base(config)
    return [_finish_row(base, names, values, stderrs, t0)], {}


def _metric_check_rows(config):
    """Distance inequalities and frame invariance on Haar pairs in Gr_2(R^4)."""
    t0 = time.perf_counter()
    rng = derive_stream(config.seed, 0)
    lower_violations = 0
    upper_violations = 0
    worst_lower_ratio = 0.0
    max_frame_gap = 0.0
    for _ in range(config.trials):
        e = haar_random_subspace(rng, 4, 2)
        f = haar_random_subspace(rng, 4, 2)
        dh = d_hausdorff(e, f)
        dg = d_geodesic(e, f)
        lower = (2.0 / math.pi) * dg
        if dh + 1e-12 < lower:
            lower_violations += 1
            if dh > 0.0:
                worst_lower_ratio = max(worst_lower_ratio, lower / dh)
        if dh > dg + 1e-12:
            upper_violations += 1
        spin, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        e2 = orthonormalize(e.cols @ spin)
        max_frame_gap = max(max_frame_gap, abs(d_hausdorff(e2, f) - dh))
    names = [
        "pairs",
        "lower_bound_violations", "worst_lower_ratio",
        "upper_bound_violations", "max_frame_gap",
    ]
    values = [
        float(config.trials),
        float(lower_violations), worst_lower_ratio,
        float(upper_violations), max_frame_gap,
    ]
    stderrs = [None] * len(values)
    base = _row_base(config)
    return [_finish_row(base, names, values, stderrs, t0)], {}


def _uniformity_rows(config):
    t0 = time.perf_counter()
    fam = build_family(config.family)
    model = build_noise(config.noise, fam.N)
    report = uniformity_check(fam, model, config.n_steps, config.trials, config.seed)
    names = ["ks_max", "ks_threshold", "ks_pass"]
    values = [
        float(np.max(report.statistics)),
        report.threshold,
        float(report.passes),
    ]
    stderrs = [None, None, None]
    base = _row_base(config, fam)
    return [_finish_row(base, names, values, stderrs, t0)], {}


_DISPATCH = {
    "spectrum": _spectrum_rows,
    "sweep": _spectrum_rows,
    "f2": _f2_rows,
    "cone-escape": _cone_escape_rows,
    "noise-check": _noise_check_rows,
    "transversality": _transversality_rows,
    "metric-check": _metric_check_rows,
    "uniformity": _uniformity_rows,
}


def _write_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_FIELDS)
        for row in rows:
            writer.writerow([_fmt_cell(getattr(row, name)) for name in RESULT_FIELDS])


def _row_json(row):
    return {name: getattr(row, name) for name in RESULT_FIELDS}


def _write_json(path, config, rows, aggregates, total_time):
    summary = {
        "version": __version__,
        "config": config.to_document(),
        "rows": [_row_json(r) for r in rows],
        "aggregates": aggregates,
        "wall_time_s": total_time,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def run(config):
    """Execute one validated config; returns the process exit status.

    0 on success, 1 on a configuration error, 2 on an invariant violation
    or any other library-detected failure mid-run. Output files appear only
    on success; partial files are removed.
    """
    if not isinstance(config, RunConfig):
        raise ConfigError("run expects a RunConfig from parse_config")
    if config.seed == 0:
        config = replace(config, seed=_draw_entropy_seed())
    csv_path = config.out_path + ".csv"
    json_path = config.out_path + ".json"
    t0 = time.perf_counter()
    try:
        rows, aggregates = _DISPATCH[config.experiment](config)
        total = time.perf_counter() - t0
        try:
            _write_csv(csv_path, rows)
            _write_json(json_path, config, rows, aggregates, total)
        except BaseException:
            for path in (csv_path, json_path):
                if os.path.exists(path):
                    os.remove(path)
            raise
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except KickedTorusError as err:
        print(f"run failed: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"output error: {err}", file=sys.stderr)
        return 1
    print(f"wrote {csv_path} and {json_path} ({len(rows)} rows, seed {config.seed})")
    return 0
