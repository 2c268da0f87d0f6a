"""Acceptance criteria, each at its stated tolerance.

Every criterion prints one PASS/FAIL line (plus one line per clause when it
has several). Run ``pytest tests/test_acceptance.py -v`` or execute this file
directly for the summary alone.
"""

from __future__ import annotations

import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, special

sys.path.insert(0, str(Path(__file__).parent))

from helpers import central_diff, random_links, rel_err, stacked_angles, well_posed_case  # noqa: E402
from orient3d.cli import main as cli_main  # noqa: E402
from orient3d.crb import oeb, orientation_fim  # noqa: E402
from orient3d.estimators import (  # noqa: E402
    MeasurementSet,
    build_ls_matrices,
    ls_cost,
    ls_estimate,
    ls_gradient,
    ml_cost,
    ml_estimate,
    ml_gradient,
    procrustes_solve,
    select_bs_subset,
)
from orient3d.geometry import aoa_from_geometry, aoa_gradients, euler_to_rotation, random_rotation, vec  # noqa: E402
from orient3d.manifold import retract, skew  # noqa: E402
from orient3d.sim import oeb_orientation_grid, reference_scenario, rmse_vs_snr, worker_count  # noqa: E402
from orient3d.vonmises import fisher_info, sample_angles, solve_concentration  # noqa: E402
from orient3d.waveform import Upa, steering_derivatives, steering_vector  # noqa: E402


def _line(label: str, ok: bool, detail: str) -> str:
    return f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"


# ---------------------------------------------------------------- criteria


def criterion_1():
    """Constrained bound equals the Euler-chart bound on random scenarios."""
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    h = 1e-6
    for _ in range(100):
        o = np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-1.4, 1.4), rng.uniform(-math.pi, math.pi)])
        R = euler_to_rotation(o)
        ue, bs = random_links(rng, int(rng.integers(2, 4)))
        kappas = rng.uniform(1, 200, 2 * len(bs))
        J = np.column_stack(
            [(vec(euler_to_rotation(o + h * e)) - vec(euler_to_rotation(o - h * e))) / (2 * h) for e in np.eye(3)]
        )
        i_r = orientation_fim(R, ue, bs, kappas)
        chart = math.sqrt(np.trace(J @ np.linalg.solve(J.T @ i_r @ J, J.T)))
        worst = max(worst, abs(oeb(R, ue, bs, kappas) - chart) / chart)
    elapsed = time.perf_counter() - start
    return [
        ("1 bound vs Euler chart", worst < 1e-6, f"max rel err {worst:.2e} (< 1e-6)"),
        ("1 runtime", elapsed < 10, f"{elapsed:.1f} s (< 10 s)"),
    ]


def criterion_2():
    """RMSE-vs-SNR sweep of the reference scenario, 200 trials."""
    start = time.perf_counter()
    sr = rmse_vs_snr(reference_scenario(), trials=200, base_seed=0, workers=worker_count())
    elapsed = time.perf_counter() - start
    snr = sr.axis[:, 0]
    hi = snr >= -20
    ratio = sr.rmse_ml / sr.oeb
    ls_ge = sr.rmse_ls >= sr.rmse_ml
    table = ", ".join(f"{s:g} dB: {r:.3f}" for s, r in zip(snr[hi], ratio[hi]))
    bad = ", ".join(f"{s:g} dB (LS {a:.4f} < ML {b:.4f})" for s, a, b, ok in
                    zip(snr, sr.rmse_ls, sr.rmse_ml, ls_ge) if not ok)
    return [
        ("2 ML RMSE within 10% of OEB for SNR >= -20 dB", bool(np.all(np.abs(ratio[hi] - 1) <= 0.10)),
         f"ML/OEB {table}"),
        ("2 LS RMSE >= ML RMSE at every point", bool(np.all(ls_ge)),
         "all points" if not bad else f"violated at {bad}"),
        ("2 no failed trials", bool(np.all(sr.trials_failed == 0)), f"{int(sr.trials_failed.sum())} failed"),
        ("2 runtime", elapsed < 180, f"{elapsed:.1f} s (< 180 s)"),
    ]


def criterion_3():
    """OEB grids at beta = -pi/4, SNR = -10 dB."""
    start = time.perf_counter()
    two = oeb_orientation_grid(reference_scenario(-10.0), -math.pi / 4, 64, 64)
    three = oeb_orientation_grid(reference_scenario(-10.0, third_bs=True), -math.pi / 4, 64, 64)
    elapsed = time.perf_counter() - start
    step = math.pi / 63
    # neighbourhood: cells within two grid steps of (pi/2, pi/4)
    near = (np.abs(two.axis[:, 0] - math.pi / 2) <= 2 * step + 1e-12) & (
        np.abs(two.axis[:, 1] - math.pi / 4) <= 2 * step + 1e-12
    )
    peak = two.oeb[near].max()
    n_peak_2 = int(np.sum(two.oeb > 1))
    n_peak_3 = int(np.sum(three.oeb > 1))
    mono = bool(np.all(three.oeb <= two.oeb * (1 + 1e-12)))
    return [
        ("3 two-BS peak (OEB > 1) near (pi/2, pi/4)", bool(peak > 1),
         f"max OEB in neighbourhood {peak:.4f}; cells > 1 on whole grid {n_peak_2}; "
         f"grid max {two.oeb.max():.4f}"),
        ("3 three-BS grid has no cell with OEB > 1", n_peak_3 == 0, f"{n_peak_3} cells; max {three.oeb.max():.4f}"),
        ("3 OEB(3 BS) <= OEB(2 BS) pointwise", mono, f"max ratio {np.max(three.oeb / two.oeb):.4f}"),
        ("3 runtime", elapsed < 60, f"{elapsed:.1f} s (< 60 s)"),
    ]


def criterion_4():
    """Exact recovery from noiseless measurements, 1000 random cases."""
    rng = np.random.default_rng(404)
    start = time.perf_counter()
    worst = np.zeros(3)
    for _ in range(1000):
        R = random_rotation(rng)
        ue, bs = random_links(rng, 2)
        ms = MeasurementSet(stacked_angles(R, ue, bs), np.full(4, 10.0), bs, ue)
        P = procrustes_solve(build_ls_matrices(ms, [0, 1]))
        ls = ls_estimate(ms)
        ml = ml_estimate(ms, ls.minimizer)
        errs = [np.linalg.norm(X - R) for X in (P, ls.minimizer, ml.minimizer)]
        worst = np.maximum(worst, errs)
    elapsed = time.perf_counter() - start
    return [
        ("4 Procrustes error < 1e-12", worst[0] < 1e-12, f"max {worst[0]:.2e}"),
        ("4 manifold LS error < 1e-6", worst[1] < 1e-6, f"max {worst[1]:.2e}"),
        ("4 ML error < 1e-8", worst[2] < 1e-8, f"max {worst[2]:.2e}"),
        ("4 runtime", elapsed < 30, f"{elapsed:.1f} s (< 30 s)"),
    ]


def criterion_5():
    """Analytic gradients against central finite differences, 100 points each."""
    rng = np.random.default_rng(505)
    worst = dict(aoa=0.0, ls=0.0, ml=0.0, steer=0.0)
    upa = Upa(16, 16, 0.5)
    h = 1e-6
    for _ in range(100):
        R, ue, bs = well_posed_case(rng, 1)
        d_el, d_az = aoa_gradients(R, ue, bs[0])
        worst["aoa"] = max(
            worst["aoa"],
            rel_err(d_el, central_diff(lambda X: aoa_from_geometry(X, ue, bs[0]).el, R)),
            rel_err(d_az, central_diff(lambda X: aoa_from_geometry(X, ue, bs[0]).az, R)),
        )

        R, ue, bs = well_posed_case(rng, 3)
        kappas = rng.uniform(1, 100, 6)
        ms = MeasurementSet(sample_angles(stacked_angles(R, ue, bs), kappas, rng), kappas, bs, ue)
        ls = build_ls_matrices(ms, [0, 1, 2])
        X = rng.standard_normal((3, 3))
        worst["ls"] = max(worst["ls"], rel_err(ls_gradient(X, ls), central_diff(lambda Y: ls_cost(Y, ls), X)))
        worst["ml"] = max(worst["ml"], rel_err(ml_gradient(R, ms), central_diff(lambda Y: ml_cost(Y, ms), R)))

        el, az = rng.uniform(0.2, math.pi - 0.2), rng.uniform(-math.pi, math.pi)
        D = steering_derivatives(upa, (el, az))
        fd = np.column_stack([
            (steering_vector(upa, (el + h, az)) - steering_vector(upa, (el - h, az))) / (2 * h),
            (steering_vector(upa, (el, az + h)) - steering_vector(upa, (el, az - h))) / (2 * h),
        ])
        worst["steer"] = max(worst["steer"], rel_err(D[:, 0], fd[:, 0]), rel_err(D[:, 1], fd[:, 1]))
    names = dict(aoa="AoA gradients", ls="LS gradient", ml="ML gradient", steer="steering derivatives")
    return [(f"5 {names[k]} vs finite differences", v < 1e-5, f"max rel err {v:.2e} (< 1e-5)")
            for k, v in worst.items()]


def criterion_6():
    """Von Mises information against quadrature; concentration round trip."""
    worst_quad = 0.0
    for kappa in (0.1, 1.0, 2.0, 10.0, 50.0):
        norm = 2 * math.pi * special.i0e(kappa)
        val, _ = integrate.quad(lambda t: kappa * math.cos(t) * math.exp(kappa * (math.cos(t) - 1)) / norm,
                                -math.pi, math.pi, epsabs=1e-14, epsrel=1e-13, limit=200)
        worst_quad = max(worst_quad, abs(fisher_info(kappa) - val))
    worst_trip = 0.0
    for kappa in np.concatenate([np.logspace(-6, 6, 400), [0.1, 1.0, 2.0, 10.0, 50.0]]):
        worst_trip = max(worst_trip, abs(solve_concentration(fisher_info(float(kappa))) - kappa) / kappa)
    return [
        ("6 information vs quadrature", worst_quad < 1e-8, f"max abs err {worst_quad:.2e} (< 1e-8)"),
        ("6 concentration round trip", worst_trip < 1e-9, f"max rel err {worst_trip:.2e} (< 1e-9)"),
    ]


def criterion_7():
    """Retraction stays on SO(3); recorded descent trajectories obey Armijo."""
    rng = np.random.default_rng(707)
    worst_orth, worst_det = 0.0, 0.0
    for _ in range(1000):
        X = random_rotation(rng)
        U = X @ skew(rng.standard_normal((3, 3))) * 10 ** rng.uniform(-6, 2)
        Y = retract(X, U)
        worst_orth = max(worst_orth, np.linalg.norm(Y.T @ Y - np.eye(3)))
        worst_det = max(worst_det, abs(np.linalg.det(Y) - 1))
    violations, n_steps = 0, 0
    for _ in range(100):
        R, ue, bs = well_posed_case(rng, 3)
        kappas = np.full(6, rng.uniform(5, 500))
        ms = MeasurementSet(sample_angles(stacked_angles(R, ue, bs), kappas, rng), kappas, bs, ue)
        ls = ls_estimate(ms, select_bs_subset(ms))
        for rep in (ls, ml_estimate(ms, ls.minimizer)):
            f = rep.cost_history
            for k, (t, g) in enumerate(zip(rep.step_history, rep.grad_norm_history)):
                n_steps += 1
                violations += not (f[k + 1] <= f[k] - 1e-4 * t * g * g)
    return [
        ("7 retraction orthogonality < 1e-12", worst_orth < 1e-12, f"max residual {worst_orth:.2e}"),
        ("7 retraction det = +1", worst_det < 1e-12, f"max |det - 1| {worst_det:.2e}"),
        ("7 Armijo descent on every recorded step", violations == 0, f"{violations} violations in {n_steps} steps"),
    ]


def criterion_8(tmp_dir: Path):
    """Byte-identical CSVs from repeated CLI runs."""
    runs = {
        "oeb-grid": ["oeb-grid", "--grid", "16"],
        "rmse-sweep": ["rmse-sweep", "--trials", "3", "--seed", "11", "--snr-min", "-20", "--snr-step", "10"],
    }
    out = []
    saved = os.environ.get("ORIENT3D_THREADS")
    try:
        for name, flags in runs.items():
            blobs = []
            for k, threads in enumerate(("1", "2")):
                os.environ["ORIENT3D_THREADS"] = threads
                path = tmp_dir / f"{name}-{k}.csv"
                code = cli_main(flags + ["--out", str(path)])
                blobs.append(path.read_bytes() if code == 0 else None)
            same = blobs[0] is not None and blobs[0] == blobs[1]
            out.append((f"8 {name} determinism", same, "identical bytes" if same else "outputs differ"))
    finally:
        if saved is None:
            os.environ.pop("ORIENT3D_THREADS", None)
        else:
            os.environ["ORIENT3D_THREADS"] = saved
    return out


# ---------------------------------------------------------------- pytest glue


def _check(capsys, results):
    with capsys.disabled():
        print()
        for label, ok, detail in results:
            print(_line(label, ok, detail))
    failed = [f"{label}: {detail}" for label, ok, detail in results if not ok]
    assert not failed, "; ".join(failed)


def test_criterion_1_bound_stack_oracle(capsys):
    _check(capsys, criterion_1())


def test_criterion_2_rmse_sweep(capsys):
    _check(capsys, criterion_2())


def test_criterion_3_orientation_grids(capsys):
    _check(capsys, criterion_3())


def test_criterion_4_exact_recovery(capsys):
    _check(capsys, criterion_4())


def test_criterion_5_gradient_suite(capsys):
    _check(capsys, criterion_5())


def test_criterion_6_von_mises_information(capsys):
    _check(capsys, criterion_6())


def test_criterion_7_manifold_invariants(capsys):
    _check(capsys, criterion_7())


def test_criterion_8_cli_determinism(capsys, tmp_path):
    _check(capsys, criterion_8(tmp_path))


if __name__ == "__main__":
    import tempfile

    status = 0
    checks = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7]
    with tempfile.TemporaryDirectory() as tmp:
        results = [r for c in checks for r in c()] + criterion_8(Path(tmp))
    for label, ok, detail in results:
        print(_line(label, ok, detail))
        status |= not ok
    sys.exit(int(status))
