"""Command line front end.

Subcommands:

  simulate   one run from a config file and/or flags
  sweep      repeat a base config over one parameter, collect peaks
  compare    moment-closure run against a brute-force reference
  ensemble   statistics over randomly sampled nv environments
  plot       CSV series to a deterministic SVG
  rerun      replay a run recorded in a manifest

Exit codes: 0 success, 2 configuration or parameter problem, 3 solver
failure, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys

import numpy as np

from . import collective, cumulant, exact, io, model, reduced, semiclassical
from .constants import A_TOTAL
from .errors import (CapacityError, ConfigError, IntegrationError,
                     InvariantViolation, ParameterError)
from .series import TimeSeries, peak, relative_peak

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INVARIANT = 4


# ---------------------------------------------------------------------------
# config -> objects


def build_profile(cfg: dict) -> model.CouplingProfile:
    kind = cfg["profile"]
    if kind == "homogeneous":
        return model.homogeneous_couplings(cfg["n"])
    if kind == "gaussian":
        return model.gaussian_couplings(cfg["lattice_side"],
                                        width=cfg["width"])
    table_path = cfg["nv_table"]
    if table_path is None:
        table_path = default_nv_table()
    table = model.load_coupling_table(table_path)
    return model.nv_sample_environment(cfg["concentration"], table,
                                       cutoff_mhz=cfg["cutoff_mhz"],
                                       seed=cfg["seed"])


def default_nv_table() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(here, "data", "nv_shells.txt")


def resolve_rates(cfg: dict, profile: model.CouplingProfile):
    """gamma_r and omega_s in natural units from whichever keys were set."""
    a = profile.a_total
    if cfg["epsilon"] is not None:
        gamma_r = model.gamma_for_epsilon(cfg["epsilon"], a_total=a)
    elif cfg["gamma_r"] is not None:
        gamma_r = cfg["gamma_r"]
    elif cfg["gamma_r_mhz"] is not None:
        if profile.scale_mhz is None:
            raise ConfigError(
                "gamma_r_mhz needs a profile carrying a physical scale")
        gamma_r = cfg["gamma_r_mhz"] / profile.scale_mhz / profile.g
    else:
        gamma_r = model.gamma_for_epsilon(0.7, a_total=a)
    if cfg["omega_s"] is not None:
        omega_s = cfg["omega_s"]
    else:
        omega_s = 0.5 * a if cfg["detuning"] == "half" else 0.0
    return float(gamma_r), float(omega_s)


def build_params(cfg: dict,
                 profile: model.CouplingProfile) -> model.SystemParams:
    gamma_r, omega_s = resolve_rates(cfg, profile)
    return model.SystemParams(gamma_r=gamma_r, omega_s=omega_s,
                              compensate=cfg["compensate"], m_s=cfg["m_s"],
                              polarization=cfg["polarization"],
                              initial_state=cfg["initial_state"])


def run_solver(cfg: dict):
    """Execute the configured run; returns (series-or-scans, info dict)."""
    solver = cfg["solver"]
    if solver == "semiclassical":
        return _run_semiclassical(cfg)
    if solver == "ladder":
        series = collective.dicke_ladder_evolve(
            cfg["n"], c=cfg["c"], t_max=cfg["t_max"],
            n_samples=cfg["n_samples"], rtol=cfg["rtol"], atol=cfg["atol"],
            method=cfg["method"])
        return series, {"profile_kind": "homogeneous", "n": cfg["n"]}
    profile = build_profile(cfg)
    params = build_params(cfg, profile)
    common = dict(t_max=cfg["t_max"], n_samples=cfg["n_samples"],
                  rtol=cfg["rtol"], atol=cfg["atol"], method=cfg["method"])
    if solver == "exact":
        series = exact.evolve(profile, params,
                              independent=cfg["independent"], **common)
    elif solver == "collective":
        series = collective.collective_evolve(profile, params, **common)
    elif solver == "reduced":
        series = reduced.evolve_reduced(profile, params, **common)
    elif solver == "cumulant":
        shells = np.unique(profile.couplings).size
        if shells < profile.n:
            series = cumulant.evolve_blocked(
                profile, params, independent=cfg["independent"], **common)
        else:
            series = cumulant.evolve_cumulant(
                profile, params, independent=cfg["independent"], **common)
    else:
        raise ConfigError(f"unhandled solver {solver!r}")
    summary = model.regime(profile, params)
    info = {
        "profile_kind": profile.kind,
        "n": profile.n,
        "n_effective": profile.n_effective,
        "gamma_r": params.gamma_r,
        "omega_s": params.omega_s,
        "epsilon": summary.epsilon,
        "c_r": summary.c_r,
        "bottleneck": summary.bottleneck,
    }
    if profile.scale_mhz is not None:
        info["a_total_mhz"] = profile.scale_mhz * profile.g
    return series, info


def _run_semiclassical(cfg: dict):
    a = A_TOTAL
    if cfg["epsilon"] is not None:
        gamma_r = model.gamma_for_epsilon(cfg["epsilon"], a_total=a)
    elif cfg["gamma_r"] is not None:
        gamma_r = cfg["gamma_r"]
    else:
        gamma_r = 1.0
    omega_s = cfg["omega_s"]
    if omega_s is None:
        omega_s = 0.5 * a if cfg["detuning"] == "half" else 0.0
    params = semiclassical.MeanFieldParams(
        n=cfg["n"], gamma_r=float(gamma_r), omega_s=float(omega_s),
        omega_x=cfg["omega_x"], omega_x_electron=cfg["omega_x_electron"],
        m_s=cfg["m_s"])
    grid = np.linspace(cfg["scan_start"], cfg["scan_stop"],
                       cfg["scan_points"])
    scans = [semiclassical.steady_state_scan(params, cfg["scan_param"],
                                             grid,
                                             relax_time=cfg["relax_time"],
                                             tol=cfg["scan_tol"])]
    if cfg["scan_bidirectional"]:
        scans.append(semiclassical.steady_state_scan(
            params, cfg["scan_param"], grid[::-1],
            relax_time=cfg["relax_time"], tol=cfg["scan_tol"]))
    info = {"n": cfg["n"], "gamma_r": float(gamma_r),
            "scan_param": cfg["scan_param"]}
    if len(scans) == 2:
        gap, at, flag = semiclassical.hysteresis_gap(scans[0], scans[1])
        info.update({"hysteresis_gap": gap, "hysteresis_at": at,
                     "hysteretic": flag})
    return scans, info


# ---------------------------------------------------------------------------
# argument plumbing

_CONFIG_FLAGS = [
    ("--solver", str, "solver"),
    ("--profile", str, "profile"),
    ("--n", int, "n"),
    ("--lattice-side", int, "lattice_side"),
    ("--width", float, "width"),
    ("--nv-table", str, "nv_table"),
    ("--concentration", float, "concentration"),
    ("--cutoff-mhz", float, "cutoff_mhz"),
    ("--seed", int, "seed"),
    ("--epsilon", float, "epsilon"),
    ("--gamma-r", float, "gamma_r"),
    ("--gamma-r-mhz", float, "gamma_r_mhz"),
    ("--omega-s", float, "omega_s"),
    ("--detuning", str, "detuning"),
    ("--m-s", float, "m_s"),
    ("--polarization", float, "polarization"),
    ("--initial-state", str, "initial_state"),
    ("--t-max", float, "t_max"),
    ("--n-samples", int, "n_samples"),
    ("--rtol", float, "rtol"),
    ("--atol", float, "atol"),
    ("--method", str, "method"),
    ("--c", float, "c"),
    ("--omega-x", float, "omega_x"),
    ("--omega-x-electron", float, "omega_x_electron"),
    ("--scan-param", str, "scan_param"),
    ("--scan-start", float, "scan_start"),
    ("--scan-stop", float, "scan_stop"),
    ("--scan-points", int, "scan_points"),
    ("--relax-time", float, "relax_time"),
    ("--scan-tol", float, "scan_tol"),
    ("--label", str, "label"),
]


def _add_config_args(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file")
    for flag, kind, dest in _CONFIG_FLAGS:
        parser.add_argument(flag, type=kind, dest=dest, default=None)
    parser.add_argument("--compensate", action="store_true", default=None)
    parser.add_argument("--independent", action="store_true", default=None)


def _merge_config(args) -> dict:
    """File plus flag overrides, not yet validated."""
    base = {}
    if args.config:
        try:
            fh = open(args.config)
        except OSError as exc:
            raise ConfigError(
                f"cannot read config file: {exc}") from exc
        with fh:
            try:
                base = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(
                    f"config is not valid JSON: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError("config must be a JSON object")
    for _, _, dest in _CONFIG_FLAGS:
        value = getattr(args, dest, None)
        if value is not None:
            base[dest] = value
    for dest in ("compensate", "independent"):
        if getattr(args, dest, None):
            base[dest] = True
    return base


def _gather_config(args) -> dict:
    return io.load_config(_merge_config(args))


def _write_run(out_root: str, cfg: dict, force: bool) -> tuple:
    run_dir = io.prepare_run_dir(out_root, cfg, force=force)
    io.write_resolved_config(os.path.join(run_dir, "config.resolved.json"),
                             cfg)
    return run_dir, io.config_hash(cfg)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = _gather_config(args)
    run_dir, run_id = _write_run(args.out, cfg, args.force)
    manifest = os.path.join(args.out, "manifest.jsonl")
    try:
        result, info = run_solver(cfg)
    except (IntegrationError, InvariantViolation) as exc:
        status = ("integration_error" if isinstance(exc, IntegrationError)
                  else "invariant_violation")
        io.append_manifest(manifest, io.manifest_record(
            cfg, status, error=str(exc)))
        raise
    if cfg["solver"] == "semiclassical":
        io.write_scan_csv(os.path.join(run_dir, "scan.csv"), result)
    else:
        io.write_series(os.path.join(run_dir, "series.csv"), result)
        info["peak_intensity"], info["peak_time"] = peak(result)
        for key in ("bookkeeping_max_residual", "trace_deviation",
                    "plateau_intensity", "state_drift"):
            if key in result.meta:
                info[key] = result.meta[key]
    io.append_manifest(manifest, io.manifest_record(cfg, "ok", **info))
    print(f"run {run_id} written to {run_dir}")
    for key in sorted(info):
        print(f"  {key} = {info[key]}")
    return EXIT_OK


def _sweep_value_type(param: str):
    return int if param in ("n", "lattice_side", "seed", "n_samples") else \
        float


def _sweep_one(base_cfg: dict, param: str, value):
    cfg = dict(base_cfg)
    cfg[param] = value
    cfg = io.load_config(cfg)
    series, info = run_solver(cfg)
    height, at = peak(series)
    # solvers record the quasi-steady plateau; without it (rate-equation
    # traces) the first positive sample is I(0) and grid-independent
    rel = relative_peak(
        series, reference_intensity=series.meta.get("plateau_intensity"))
    return {
        "param": param, "value": value, "run_id": io.config_hash(cfg),
        "peak_intensity": height, "peak_time": at, "relative_peak": rel,
        "n_effective": info.get("n_effective", info.get("n")),
    }


def cmd_sweep(args) -> int:
    # validate per point: the swept key may be one the base config lacks
    cfg = _merge_config(args)
    kind = _sweep_value_type(args.param)
    try:
        values = [kind(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --values entry: {exc}") from exc
    if not values:
        raise ConfigError("sweep needs at least one value")
    if args.param not in io.CONFIG_SCHEMA:
        raise ConfigError(f"unknown sweep parameter {args.param!r}")
    os.makedirs(args.out, exist_ok=True)
    rows = []
    if args.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(args.workers) as pool:
            futures = [pool.submit(_sweep_one, cfg, args.param, v)
                       for v in values]
            rows = [f.result() for f in futures]
    else:
        rows = [_sweep_one(cfg, args.param, v) for v in values]
    out_csv = os.path.join(args.out, "sweep.csv")
    header = ("param", "value", "run_id", "peak_intensity", "peak_time",
              "relative_peak", "n_effective")
    with open(out_csv, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(row[k]) for k in header) + "\n")
    summary = {"param": args.param, "points": len(rows)}
    if args.param in ("n", "lattice_side") and len(rows) >= 2:
        sizes = np.array([row["n_effective"] for row in rows], float)
        peaks = np.array([row["peak_intensity"] for row in rows], float)
        mask = (sizes > 0) & (peaks > 0)
        if mask.sum() >= 2:
            slope, offset = np.polyfit(np.log(sizes[mask]),
                                       np.log(peaks[mask]), 1)
            fit = slope * np.log(sizes[mask]) + offset
            resid = np.log(peaks[mask]) - fit
            total = np.log(peaks[mask]) - np.log(peaks[mask]).mean()
            r2 = 1.0 - float(resid @ resid) / float(total @ total) \
                if float(total @ total) > 0 else 1.0
            summary["log_log_slope"] = float(slope)
            summary["r_squared"] = r2
            print(f"peak ~ size^{slope:.4f} (r^2 = {r2:.6f})")
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"sweep over {args.param} written to {out_csv}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _gather_config(args)
    if cfg["solver"] not in ("exact", "collective"):
        raise ConfigError(
            "compare needs solver set to the reference (exact or "
            "collective)")
    ref_series, _ = run_solver(cfg)
    cl_cfg = dict(cfg)
    cl_cfg["solver"] = "cumulant"
    cl_series, _ = run_solver(io.load_config(cl_cfg))
    report = deviation_report(ref_series, cl_series)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "compare.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def deviation_report(reference: TimeSeries, candidate: TimeSeries,
                     sup_tol: float = 0.05, peak_tol: float = 0.05) -> dict:
    """Normalized sup-norm and peak deviations of candidate vs reference."""
    grid = reference.t
    cand = np.interp(grid, candidate.t, candidate.intensity)
    scale = float(np.max(np.abs(reference.intensity)))
    if scale == 0:
        scale = 1.0
    sup = float(np.max(np.abs(cand - reference.intensity))) / scale
    h_ref, t_ref = peak(reference)
    h_cand, t_cand = peak(candidate)
    dh = abs(h_cand - h_ref) / abs(h_ref) if h_ref else 0.0
    dt = abs(t_cand - t_ref) / abs(t_ref) if t_ref else 0.0
    return {
        "sup_norm_deviation": sup,
        "peak_height_deviation": float(dh),
        "peak_time_deviation": float(dt),
        "sup_tol": sup_tol,
        "peak_tol": peak_tol,
        "passed": bool(sup <= sup_tol and dh <= peak_tol and
                       dt <= peak_tol),
    }


def cmd_ensemble(args) -> int:
    cfg = _gather_config(args)
    if cfg["profile"] != "nv":
        raise ConfigError("ensemble requires the nv profile")
    try:
        sizes = [int(v) for v in args.n_values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --n-values entry: {exc}") from exc
    if not sizes:
        raise ConfigError("ensemble needs --n-values")
    table = model.load_coupling_table(cfg["nv_table"] or default_nv_table())
    os.makedirs(args.out, exist_ok=True)
    rows = []
    seed = cfg["seed"]
    for n_target in sizes:
        for _ in range(args.environments):
            profile, seed_used = model.sample_environment_with_count(
                cfg["concentration"], table, n_target,
                cutoff_mhz=cfg["cutoff_mhz"], seed=seed)
            seed = seed_used + 1
            sub = dict(cfg)
            sub["seed"] = seed_used
            sub["n"] = None
            run_cfg = io.load_config(sub)
            series, info = run_solver(run_cfg)
            rel = relative_peak(
                series,
                reference_intensity=series.meta.get("plateau_intensity"))
            rows.append({
                "n": n_target, "seed": seed_used,
                "a_total_mhz": info.get("a_total_mhz", float("nan")),
                "relative_peak": rel,
                "peak_intensity": peak(series)[0],
            })
    out_csv = os.path.join(args.out, "ensemble.csv")
    header = ("n", "seed", "a_total_mhz", "relative_peak", "peak_intensity")
    with open(out_csv, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(row[k]) for k in header) + "\n")
    by_n = {}
    for row in rows:
        by_n.setdefault(row["n"], []).append(row["relative_peak"])
    summary = {str(n): {"mean": float(np.mean(v)),
                        "std": float(np.std(v)),
                        "count": len(v)}
               for n, v in sorted(by_n.items())}
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for n, stats in summary.items():
        print(f"n = {n}: relative peak {stats['mean']:.4f} "
              f"+/- {stats['std']:.4f} over {stats['count']} environments")
    return EXIT_OK


def cmd_plot(args) -> int:
    curves = []
    for path in args.series:
        series = io.read_series(path)
        label = os.path.basename(os.path.dirname(path)) or \
            os.path.basename(path)
        if args.column not in series.__dataclass_fields__ or \
                args.column == "meta":
            raise ConfigError(f"unknown series column {args.column!r}")
        curves.append((label, series.t, series.column(args.column)))
    io.write_svg_plot(args.out, curves, log_y=args.log_y,
                      title=args.title or "", y_label=args.column)
    print(f"plot written to {args.out}")
    return EXIT_OK


def cmd_rerun(args) -> int:
    records = io.read_manifest(args.manifest)
    matches = [r for r in records if r.get("run_id") == args.run_id]
    if not matches:
        raise ConfigError(
            f"run id {args.run_id!r} not found in {args.manifest}")
    cfg = io.load_config(matches[-1]["config"])
    result, info = run_solver(cfg)
    os.makedirs(args.out, exist_ok=True)
    if cfg["solver"] == "semiclassical":
        io.write_scan_csv(os.path.join(args.out, "scan.csv"), result)
    else:
        io.write_series(os.path.join(args.out, "series.csv"), result)
    print(f"replayed {args.run_id} into {args.out}")
    old = matches[-1]
    if "peak_intensity" in old and cfg["solver"] != "semiclassical":
        height, _ = peak(result)
        drift = abs(height - old["peak_intensity"])
        rel = drift / abs(old["peak_intensity"]) \
            if old["peak_intensity"] else drift
        print(f"peak intensity drift vs manifest: {rel:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinburst",
        description="Collective emission from a pumped central spin")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one configuration")
    _add_config_args(p)
    p.add_argument("--out", default="runs", help="output root directory")
    p.add_argument("--force", action="store_true",
                   help="overwrite an existing run directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="scan one config key")
    _add_config_args(p)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True,
                   help="comma separated parameter values")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare",
                       help="moment closure against a brute-force run")
    _add_config_args(p)
    p.add_argument("--out", default="compare")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ensemble", help="sampled nv environment statistics")
    _add_config_args(p)
    p.add_argument("--n-values", required=True,
                   help="comma separated target bath sizes")
    p.add_argument("--environments", type=int, default=8)
    p.add_argument("--out", default="ensemble")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("plot", help="series CSVs to SVG")
    p.add_argument("series", nargs="+", help="series.csv paths")
    p.add_argument("--out", default="plot.svg")
    p.add_argument("--column", default="intensity")
    p.add_argument("--log-y", action="store_true")
    p.add_argument("--title", default=None)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("rerun", help="replay a manifest entry")
    p.add_argument("--manifest", required=True)
    p.add_argument("--run-id", required=True)
    p.add_argument("--out", default="rerun")
    p.set_defaults(func=cmd_rerun)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
