"""``orient3d`` command line: OEB grids, RMSE sweeps and one-shot estimation.

Exit codes: 0 success, 1 runtime or estimation failure, 2 configuration or
validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .crb import oeb as compute_oeb
from .estimators import EstimationError, MeasurementSet, ls_estimate, ml_estimate
from .geometry import GeometryError, rotation_to_euler
from .sim import (
    DEFAULT_GRID,
    DEFAULT_TRIALS,
    Scenario,
    oeb_orientation_grid,
    reference_scenario,
    rmse_vs_snr,
    worker_count,
    write_results,
)

log = logging.getLogger("orient3d")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    """Bad flags or input files; maps to exit code 2."""


def _load_scenario(path: str | None, third_bs: bool = False) -> Scenario:
    if path is None:
        return reference_scenario(third_bs=third_bs)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"scenario file not found: {p}")
    try:
        sc = Scenario.load(p)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario file {p}: {exc}") from exc
    if third_bs:
        raise ConfigError("--third-bs only applies to the built-in scenario")
    return sc


def _snr_grid(args) -> list[float]:
    if args.snr is not None:
        return [args.snr]
    if args.snr_step <= 0:
        raise ConfigError("--snr-step must be positive")
    if args.snr_max < args.snr_min:
        raise ConfigError("--snr-max must not be below --snr-min")
    n = int(math.floor((args.snr_max - args.snr_min) / args.snr_step + 1e-9)) + 1
    return [args.snr_min + k * args.snr_step for k in range(n)]


def cmd_oeb_grid(args) -> int:
    if args.grid < 2:
        raise ConfigError("--grid must be at least 2")
    sc = _load_scenario(args.scenario, args.third_bs)
    if args.snr is not None:
        sc = sc.with_snr(args.snr)
    sr = oeb_orientation_grid(sc, args.beta, args.grid, args.grid)
    write_results(sr, args.out)
    finite = sr.oeb[np.isfinite(sr.oeb)]
    n_inf = int(np.sum(~np.isfinite(sr.oeb)))
    n_trunc = int(np.sum(sr.oeb > 1.0))
    print(f"grid: {args.grid}x{args.grid}, beta = {args.beta:.6g} rad, {sc.n_bs} BSs")
    if finite.size:
        print(f"OEB min: {finite.min():.6g}  max (finite): {finite.max():.6g}")
    print(f"cells with OEB > 1 (truncated): {n_trunc}")
    print(f"flagged-infinite cells: {n_inf}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_rmse_sweep(args) -> int:
    if args.trials < 1:
        raise ConfigError("--trials must be at least 1")
    sc = _load_scenario(args.scenario, args.third_bs)
    grid = _snr_grid(args)
    try:
        workers = worker_count()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sr = rmse_vs_snr(sc, grid, args.trials, args.seed, workers=workers)
    write_results(sr, args.out)
    print(f"{'snr_db':>8} {'oeb':>12} {'rmse_ls':>12} {'rmse_ml':>12} {'ok':>5} {'failed':>6}")
    for k in range(len(sr)):
        print(
            f"{sr.axis[k, 0]:8.2f} {sr.oeb[k]:12.6g} {sr.rmse_ls[k]:12.6g} "
            f"{sr.rmse_ml[k]:12.6g} {sr.trials_ok[k]:5d} {sr.trials_failed[k]:6d}"
        )
    print(f"wrote {args.out}")
    return EXIT_OK


def read_measurements(path: str | Path, n_bs: int) -> tuple[list[int], np.ndarray, np.ndarray | None]:
    """Parse a measurement CSV.

    Returns 0-based BS indices, the stacked ``(el, az)`` angles, and the
    stacked concentrations (``None`` when the file has no kappa columns).
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"measurement file not found: {p}")
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in reader.fieldnames or []]
        rows = [{k.strip(): (v or "").strip() for k, v in r.items() if k is not None} for r in reader]
    for col in ("bs_index", "el_rad", "az_rad"):
        if col not in fields:
            raise ConfigError(f"{p}: missing column {col!r}")
    has_kappa = "kappa_el" in fields and "kappa_az" in fields
    if ("kappa_el" in fields) != ("kappa_az" in fields):
        raise ConfigError(f"{p}: kappa_el and kappa_az must be given together")

    indices, angles, kappas = [], [], []
    for line, r in enumerate(rows, start=2):
        try:
            idx = int(r["bs_index"])
            el, az = float(r["el_rad"]), float(r["az_rad"])
            kap = (float(r["kappa_el"]), float(r["kappa_az"])) if has_kappa else (1.0, 1.0)
        except ValueError as exc:
            raise ConfigError(f"{p}:{line}: {exc}") from exc
        if not 1 <= idx <= n_bs:
            raise ConfigError(f"{p}:{line}: bs_index {idx} outside 1..{n_bs}")
        if idx - 1 in indices:
            raise ConfigError(f"{p}:{line}: duplicate bs_index {idx}")
        if not (0.0 <= el <= math.pi and math.isfinite(el)):
            raise ConfigError(f"{p}:{line}: elevation {el} outside [0, pi]")
        if not (-math.pi <= az <= math.pi and math.isfinite(az)):
            raise ConfigError(f"{p}:{line}: azimuth {az} outside [-pi, pi]")
        if not all(k >= 0 and math.isfinite(k) for k in kap):
            raise ConfigError(f"{p}:{line}: concentrations must be finite and non-negative")
        indices.append(idx - 1)
        angles.extend((el, az))
        kappas.extend(kap)
    return indices, np.array(angles), (np.array(kappas) if has_kappa else None)


def _print_rotation(label: str, R: np.ndarray, cost: float, converged: bool, message: str) -> None:
    o = rotation_to_euler(R)
    print(f"{label} estimate ({'converged' if converged else message}), cost {cost:.10g}")
    for row in R:
        print("  " + " ".join(f"{v: .8f}" for v in row))
    print(f"  euler (alpha, beta, gamma) rad: {o.alpha:.8f} {o.beta:.8f} {o.gamma:.8f}")


def cmd_estimate(args) -> int:
    sc = _load_scenario(args.scenario)
    indices, theta_hat, kappas = read_measurements(args.measurements, sc.n_bs)
    if len(indices) < 2:
        print("error: underdetermined: at least 2 BSs should be used", file=sys.stderr)
        return EXIT_RUNTIME
    bs = sc.bs_positions[indices]
    ms = MeasurementSet(
        theta_hat, kappas if kappas is not None else np.ones_like(theta_hat), bs, sc.ue_position
    )
    ls = ls_estimate(ms)
    ml = ml_estimate(ms, ls.minimizer)
    _print_rotation("LS", ls.minimizer, ls.final_cost, ls.converged, ls.message)
    _print_rotation("ML", ml.minimizer, ml.final_cost, ml.converged, ml.message)
    if kappas is not None:
        bound = compute_oeb(ml.minimizer, sc.ue_position, bs, kappas)
        print(f"OEB at the ML estimate: {bound:.8g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orient3d", description="3D orientation estimation from angle-of-arrival measurements."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log optimizer warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", help="scenario JSON (default: built-in two-BS setup)")

    p = sub.add_parser("oeb-grid", help="OEB over an (alpha, gamma) grid at fixed beta")
    common(p)
    p.add_argument("--third-bs", action="store_true", help="add BS3 to the built-in scenario")
    p.add_argument("--beta", type=float, default=-math.pi / 4, help="fixed beta in rad")
    p.add_argument("--grid", type=int, default=DEFAULT_GRID, help="points per axis")
    p.add_argument("--snr", type=float, help="override the scenario SNR (dB)")
    p.add_argument("--out", default="oeb_grid.csv")
    p.set_defaults(func=cmd_oeb_grid)

    p = sub.add_parser("rmse-sweep", help="LS/ML RMSE and OEB versus SNR")
    common(p)
    p.add_argument("--third-bs", action="store_true", help="add BS3 to the built-in scenario")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--seed", type=int, default=0, help="base seed; trial i uses seed + i")
    p.add_argument("--snr-min", type=float, default=-40.0)
    p.add_argument("--snr-max", type=float, default=0.0)
    p.add_argument("--snr-step", type=float, default=5.0)
    p.add_argument("--snr", type=float, help="single SNR point (dB); overrides the range")
    p.add_argument("--out", default="rmse_sweep.csv")
    p.set_defaults(func=cmd_rmse_sweep)

    p = sub.add_parser("estimate", help="LS and ML orientation from a measurement CSV")
    common(p)
    p.add_argument("measurements", help="CSV: bs_index,el_rad,az_rad[,kappa_el,kappa_az]")
    p.set_defaults(func=cmd_estimate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EstimationError, GeometryError, ArithmeticError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
