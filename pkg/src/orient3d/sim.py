"""Scenario description, Monte Carlo trials and the two experiment drivers.

Every random draw of a trial comes from ``numpy.random.default_rng(seed)``
with the seed fixed before dispatch, so results do not depend on how trials
are spread over worker processes.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .crb import oeb as _oeb
from .estimators import EstimationError, MeasurementSet, ls_estimate, ml_estimate, select_bs_subset
from .geometry import AoaPair, EulerAngles, GeometryError, aoa_many, euler_to_rotation
from .manifold import ManifoldOptions
from .vonmises import sample_angles
from .waveform import CalibrationError, Upa, calibrate_concentrations, db_to_linear

__all__ = [
    "REFERENCE_ORIENTATION",
    "Scenario",
    "SweepResult",
    "TrialResult",
    "oeb_orientation_grid",
    "reference_scenario",
    "read_results",
    "rmse_vs_snr",
    "run_trial",
    "scenario_oeb",
    "worker_count",
    "write_results",
]

REFERENCE_ORIENTATION = EulerAngles(0.6 * math.pi, 0.0, -0.8 * math.pi)
REFERENCE_BS = ((0.0, 0.0, 0.0), (0.0, 50.0, 0.0))
REFERENCE_THIRD_BS = (50.0, 50.0, 0.0)
REFERENCE_UE = (50.0, 0.0, -5.0)

DEFAULT_TRIALS = 200
DEFAULT_GRID = 64
DEFAULT_SNR_GRID = tuple(float(s) for s in range(-40, 1, 5))


@dataclass(frozen=True)
class Scenario:
    bs_positions: np.ndarray
    ue_position: np.ndarray
    true_orientation: EulerAngles
    upa: Upa = Upa()
    snr_db: np.ndarray = field(default_factory=lambda: np.array([-10.0]))
    carrier_ghz: float = 28.0

    def __post_init__(self):
        bs = np.atleast_2d(np.asarray(self.bs_positions, dtype=float))
        ue = np.asarray(self.ue_position, dtype=float).reshape(3)
        if bs.shape[1] != 3 or bs.shape[0] < 1:
            raise ValueError(f"BS positions must be an (M, 3) array, got shape {bs.shape}")
        if np.any(np.linalg.norm(bs - ue, axis=1) == 0):
            raise ValueError("a BS coincides with the UE")
        snr = np.asarray(self.snr_db, dtype=float).ravel()
        if snr.size == 1:
            snr = np.full(bs.shape[0], snr[0])
        if snr.size != bs.shape[0]:
            raise ValueError(f"{snr.size} SNR values for {bs.shape[0]} BSs")
        object.__setattr__(self, "bs_positions", bs)
        object.__setattr__(self, "ue_position", ue)
        object.__setattr__(self, "snr_db", snr)

    @property
    def n_bs(self) -> int:
        return self.bs_positions.shape[0]

    def rotation(self) -> np.ndarray:
        return euler_to_rotation(self.true_orientation)

    def with_snr(self, snr_db) -> "Scenario":
        return replace(self, snr_db=np.broadcast_to(np.asarray(snr_db, dtype=float), (self.n_bs,)).copy())

    def with_orientation(self, o: EulerAngles) -> "Scenario":
        return replace(self, true_orientation=o)

    def with_bs(self, bs_positions) -> "Scenario":
        bs = np.atleast_2d(np.asarray(bs_positions, dtype=float))
        snr = self.snr_db if bs.shape[0] == self.n_bs else np.full(bs.shape[0], self.snr_db[0])
        return replace(self, bs_positions=bs, snr_db=snr)

    def true_angles(self) -> np.ndarray:
        """Stacked ``(el_1, az_1, ...)`` for the true orientation."""
        el, az = aoa_many(self.rotation(), self.ue_position, self.bs_positions)
        return np.column_stack([el, az]).ravel()

    def concentrations(self) -> np.ndarray:
        theta = self.true_angles().reshape(-1, 2)
        return calibrate_concentrations(
            self.upa, [AoaPair(*t) for t in theta], db_to_linear(self.snr_db)
        )

    # JSON uses explicit units in the field names
    def to_dict(self) -> dict:
        o = self.true_orientation
        return {
            "bs_positions_m": self.bs_positions.tolist(),
            "ue_position_m": self.ue_position.tolist(),
            "orientation_rad": {"alpha": o.alpha, "beta": o.beta, "gamma": o.gamma},
            "snr_db": self.snr_db.tolist(),
            "upa": {
                "nx": self.upa.nx,
                "ny": self.upa.ny,
                "spacing_wavelengths": self.upa.spacing,
            },
            "carrier_ghz": self.carrier_ghz,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        o = data.get("orientation_rad", [REFERENCE_ORIENTATION.alpha, REFERENCE_ORIENTATION.beta, REFERENCE_ORIENTATION.gamma])
        if isinstance(o, dict):
            orientation = EulerAngles(float(o["alpha"]), float(o["beta"]), float(o["gamma"]))
        else:
            orientation = EulerAngles(*(float(v) for v in o))
        upa = data.get("upa", {})
        return cls(
            bs_positions=np.asarray(data["bs_positions_m"], dtype=float),
            ue_position=np.asarray(data["ue_position_m"], dtype=float),
            true_orientation=orientation,
            upa=Upa(
                nx=int(upa.get("nx", 16)),
                ny=int(upa.get("ny", 16)),
                spacing=float(upa.get("spacing_wavelengths", 0.5)),
            ),
            snr_db=np.asarray(data.get("snr_db", -10.0), dtype=float),
            carrier_ghz=float(data.get("carrier_ghz", 28.0)),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Scenario":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def reference_scenario(snr_db: float = -10.0, third_bs: bool = False, orientation: EulerAngles = REFERENCE_ORIENTATION) -> Scenario:
    """Two BSs at (0,0,0) and (0,50,0), UE at (50,0,-5), 16x16 half-wavelength UPA."""
    bs = list(REFERENCE_BS) + ([REFERENCE_THIRD_BS] if third_bs else [])
    return Scenario(
        bs_positions=np.array(bs),
        ue_position=np.array(REFERENCE_UE),
        true_orientation=orientation,
        upa=Upa(16, 16, 0.5),
        snr_db=np.full(len(bs), float(snr_db)),
        carrier_ghz=28.0,
    )


def scenario_oeb(sc: Scenario) -> float:
    """OEB of the scenario's true orientation; ``inf`` if calibration is singular."""
    try:
        kappas = sc.concentrations()
    except (CalibrationError, GeometryError):
        return math.inf
    return _oeb(sc.rotation(), sc.ue_position, sc.bs_positions, kappas)


@dataclass
class TrialResult:
    seed: int
    ls_error_frob: float = math.nan
    ml_error_frob: float = math.nan
    ls_cost: float = math.nan
    ml_cost: float = math.nan
    ls_converged: bool = False
    ml_converged: bool = False
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


def run_trial(
    sc: Scenario,
    seed: int,
    opts: ManifoldOptions | None = None,
    ls_subset_size: int = 2,
) -> TrialResult:
    """One Monte Carlo draw: sample AoAs, run LS then ML, record Frobenius errors.

    The LS fit uses the best ``ls_subset_size`` BSs; ML uses all of them.
    """
    rng = np.random.default_rng(seed)
    R_true = sc.rotation()
    theta = sc.true_angles()
    try:
        kappas = sc.concentrations()
    except CalibrationError as exc:
        return TrialResult(seed, failure=f"calibration: {exc}")
    theta_hat = sample_angles(theta, kappas, rng)
    ms = MeasurementSet(theta_hat, kappas, sc.bs_positions, sc.ue_position)

    try:
        subset = select_bs_subset(ms, min(ls_subset_size, ms.n_bs))
        ls = ls_estimate(ms, subset, opts)
    except (EstimationError, ValueError) as exc:
        return TrialResult(seed, failure=f"ls: {exc}")
    try:
        ml = ml_estimate(ms, ls.minimizer, opts)
    except GeometryError as exc:
        return TrialResult(seed, failure=f"ml: {exc}")
    return TrialResult(
        seed=seed,
        ls_error_frob=float(np.linalg.norm(R_true - ls.minimizer)),
        ml_error_frob=float(np.linalg.norm(R_true - ml.minimizer)),
        ls_cost=ls.final_cost,
        ml_cost=ml.final_cost,
        ls_converged=ls.converged,
        ml_converged=ml.converged,
    )


@dataclass
class SweepResult:
    """One row per sweep point; ``axis`` has one column per name in ``axis_names``."""

    axis_names: tuple[str, ...]
    axis: np.ndarray
    oeb: np.ndarray
    rmse_ls: np.ndarray
    rmse_ml: np.ndarray
    trials_ok: np.ndarray
    trials_failed: np.ndarray

    def __len__(self) -> int:
        return len(self.oeb)

    @classmethod
    def empty(cls, axis_names: Sequence[str]) -> "SweepResult":
        return cls(
            tuple(axis_names),
            np.empty((0, len(axis_names))),
            np.empty(0),
            np.empty(0),
            np.empty(0),
            np.empty(0, dtype=int),
            np.empty(0, dtype=int),
        )

    def oeb_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.oeb)

    def equals(self, other: "SweepResult") -> bool:
        def same(a, b):
            return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)

        return self.axis_names == other.axis_names and all(
            same(getattr(self, f), getattr(other, f))
            for f in ("axis", "oeb", "rmse_ls", "rmse_ml", "trials_ok", "trials_failed")
        )


def worker_count() -> int:
    """Worker processes to use: ``ORIENT3D_THREADS`` capped at the CPU count."""
    cpus = os.cpu_count() or 1
    env = os.environ.get("ORIENT3D_THREADS")
    if env:
        try:
            return max(1, min(cpus, int(env)))
        except ValueError:
            raise ValueError(f"ORIENT3D_THREADS must be an integer, got {env!r}") from None
    return cpus


def _run_trial_args(args) -> TrialResult:
    return run_trial(*args)


def _parallel_map(func: Callable, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=max(1, len(items) // (4 * workers))))


def _rmse(errors: Iterable[float]) -> float:
    e = np.asarray(list(errors), dtype=float)
    return float(np.sqrt(np.mean(e * e))) if e.size else math.nan


def rmse_vs_snr(
    sc: Scenario,
    snr_grid_db: Sequence[float] = DEFAULT_SNR_GRID,
    trials: int = DEFAULT_TRIALS,
    base_seed: int = 0,
    opts: ManifoldOptions | None = None,
    workers: int | None = None,
) -> SweepResult:
    """LS and ML RMSE over ``trials`` Monte Carlo draws at every SNR, next to the OEB.

    Trial ``i`` at every SNR point uses seed ``base_seed + i``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    workers = worker_count() if workers is None else workers
    points = [sc.with_snr(s) for s in snr_grid_db]
    tasks = [(p, base_seed + i, opts) for p in points for i in range(trials)]
    results = _parallel_map(_run_trial_args, tasks, workers)

    n = len(points)
    out = SweepResult(
        ("snr_db",),
        np.asarray(snr_grid_db, dtype=float).reshape(n, 1),
        np.array([scenario_oeb(p) for p in points]),
        np.empty(n),
        np.empty(n),
        np.empty(n, dtype=int),
        np.empty(n, dtype=int),
    )
    for k in range(n):
        chunk = results[k * trials : (k + 1) * trials]
        good = [r for r in chunk if r.ok]
        out.rmse_ls[k] = _rmse(r.ls_error_frob for r in good)
        out.rmse_ml[k] = _rmse(r.ml_error_frob for r in good)
        out.trials_ok[k] = len(good)
        out.trials_failed[k] = len(chunk) - len(good)
    return out


def oeb_orientation_grid(
    sc: Scenario,
    beta_fixed: float = -math.pi / 4,
    n_alpha: int = DEFAULT_GRID,
    n_gamma: int = DEFAULT_GRID,
) -> SweepResult:
    """OEB over ``(alpha, gamma)`` in ``[0, pi]^2`` with beta held fixed.

    Rows run alpha-major. Singular points carry ``inf``.
    """
    if n_alpha < 2 or n_gamma < 2:
        raise ValueError("grid sizes must be >= 2")
    alphas = np.linspace(0.0, math.pi, n_alpha)
    gammas = np.linspace(0.0, math.pi, n_gamma)
    aa, gg = np.meshgrid(alphas, gammas, indexing="ij")
    axis = np.column_stack([aa.ravel(), gg.ravel()])
    values = np.array(
        [scenario_oeb(sc.with_orientation(EulerAngles(a, beta_fixed, g))) for a, g in axis]
    )
    n = len(values)
    return SweepResult(
        ("alpha_rad", "gamma_rad"),
        axis,
        values,
        np.full(n, math.nan),
        np.full(n, math.nan),
        np.zeros(n, dtype=int),
        np.zeros(n, dtype=int),
    )


_VALUE_COLUMNS = ("oeb", "oeb_db", "rmse_ls", "rmse_ml", "trials_ok", "trials_failed")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_results(sr: SweepResult, path: str | os.PathLike) -> Path:
    """Write a sweep as UTF-8 CSV with a header row; floats use 17 significant digits."""
    path = Path(path)
    oeb_db = sr.oeb_db()
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(sr.axis_names) + list(_VALUE_COLUMNS))
            for k in range(len(sr)):
                w.writerow(
                    [_fmt(v) for v in sr.axis[k]]
                    + [
                        _fmt(sr.oeb[k]),
                        _fmt(oeb_db[k]),
                        _fmt(sr.rmse_ls[k]),
                        _fmt(sr.rmse_ml[k]),
                        str(int(sr.trials_ok[k])),
                        str(int(sr.trials_failed[k])),
                    ]
                )
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def read_results(path: str | os.PathLike) -> SweepResult:
    """Inverse of :func:`write_results`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    n_axis = len(header) - len(_VALUE_COLUMNS)
    if n_axis < 1 or tuple(header[n_axis:]) != _VALUE_COLUMNS:
        raise ValueError(f"{path}: unexpected header {header}")
    body = rows[1:]
    sr = SweepResult.empty(header[:n_axis])
    if not body:
        return sr
    data = np.array([[float(v) for v in r[: n_axis + 4]] for r in body])
    counts = np.array([[int(v) for v in r[n_axis + 4 :]] for r in body])
    sr.axis = data[:, :n_axis]
    sr.oeb = data[:, n_axis]
    sr.rmse_ls = data[:, n_axis + 2]
    sr.rmse_ml = data[:, n_axis + 3]
    sr.trials_ok = counts[:, 0]
    sr.trials_failed = counts[:, 1]
    return sr
