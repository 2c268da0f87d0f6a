"""Least-squares and maximum-likelihood orientation estimators.

The LS estimator turns each measured AoA pair back into a local-frame vector
``q_m`` (the BS distance is known) and fits ``U = R Q`` on SO(3). The ML
estimator refines that fit by maximising the von Mises likelihood of all
measured angles.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import (
    SingularGradientError,
    angles_from_offsets,
    gradient_columns_from_units,
    q_from_aoa,
)
from .manifold import AbortOptimization, ManifoldOptions, OptimizeReport, minimize

__all__ = [
    "EstimationError",
    "LsMatrices",
    "MeasurementSet",
    "build_ls_matrices",
    "ls_cost",
    "ls_estimate",
    "ls_gradient",
    "ml_cost",
    "ml_estimate",
    "ml_gradient",
    "procrustes_solve",
    "select_bs_subset",
]

# minimum angle between two UE->BS directions for a usable pair
_MIN_PAIR_ANGLE = 1e-3


class EstimationError(ValueError):
    """Orientation cannot be estimated from the given data."""


@dataclass
class MeasurementSet:
    """Measured AoAs ordered ``(el_1, az_1, el_2, az_2, ...)`` with their concentrations."""

    theta_hat: np.ndarray
    kappas: np.ndarray
    bs_positions: np.ndarray
    ue_position: np.ndarray

    def __post_init__(self):
        self.theta_hat = np.asarray(self.theta_hat, dtype=float).ravel()
        self.kappas = np.asarray(self.kappas, dtype=float).ravel()
        self.bs_positions = np.atleast_2d(np.asarray(self.bs_positions, dtype=float))
        self.ue_position = np.asarray(self.ue_position, dtype=float).reshape(3)
        n = 2 * self.bs_positions.shape[0]
        if self.theta_hat.size != n or self.kappas.size != n:
            raise ValueError(
                f"{self.bs_positions.shape[0]} BSs need {n} angles and concentrations, "
                f"got {self.theta_hat.size} and {self.kappas.size}"
            )
        if np.any(self.kappas < 0):
            raise ValueError("concentrations must be non-negative")
        d = self.bs_positions - self.ue_position
        dist = np.linalg.norm(d, axis=1)
        if np.any(dist == 0):
            raise ValueError("a BS coincides with the UE")
        self._d, self._dist = d, dist
        self._units = -d / dist[:, None]

    @property
    def n_bs(self) -> int:
        return self.bs_positions.shape[0]

    def offsets(self) -> np.ndarray:
        """``p_m - p`` as rows."""
        return self.bs_positions - self.ue_position


@dataclass
class LsMatrices:
    q_mat: np.ndarray
    u_mat: np.ndarray


def _pair_ok(a: np.ndarray, b: np.ndarray) -> bool:
    sin_angle = np.linalg.norm(np.cross(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return sin_angle > math.sin(_MIN_PAIR_ANGLE)


def build_ls_matrices(ms: MeasurementSet, subset: Sequence[int]) -> LsMatrices:
    """Columns ``q_m`` rebuilt from the measured AoAs and ``u_m = p_m - p``."""
    subset = list(subset)
    if len(subset) < 2:
        raise EstimationError("underdetermined: at least 2 BSs should be used")
    offsets = ms.offsets()[subset]
    for a, b in itertools.combinations(range(len(subset)), 2):
        if not _pair_ok(offsets[a], offsets[b]):
            raise EstimationError(
                f"degenerate subset: BSs {subset[a]} and {subset[b]} are collinear with the UE"
            )
    dist = np.linalg.norm(offsets, axis=1)
    q = np.column_stack(
        [q_from_aoa(ms.theta_hat[2 * m : 2 * m + 2], d) for m, d in zip(subset, dist)]
    )
    return LsMatrices(q_mat=q, u_mat=offsets.T.copy())


def procrustes_solve(ls: LsMatrices) -> np.ndarray:
    """Global minimiser of ``|U - R Q|_F^2`` over SO(3) via the SVD of ``U Q^T``."""
    H = ls.u_mat @ ls.q_mat.T
    W, sv, Vt = np.linalg.svd(H)
    if sv[1] <= 1e-12 * max(sv[0], 1e-300):
        raise EstimationError("orientation unobservable: U Q^T has rank < 2")
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(W @ Vt))])
    return W @ D @ Vt


def ls_cost(R: np.ndarray, ls: LsMatrices) -> float:
    resid = ls.u_mat - R @ ls.q_mat
    return float(np.sum(resid * resid))


def ls_gradient(R: np.ndarray, ls: LsMatrices) -> np.ndarray:
    """Euclidean gradient ``-2 (U - R Q) Q^T``."""
    return -2.0 * (ls.u_mat - R @ ls.q_mat) @ ls.q_mat.T


def ls_estimate(
    ms: MeasurementSet, subset: Sequence[int] | None = None, opts: ManifoldOptions | None = None
) -> OptimizeReport:
    """LS orientation fit on SO(3), started from the identity."""
    if subset is None:
        subset = range(ms.n_bs)
    ls = build_ls_matrices(ms, subset)
    return minimize(lambda R: ls_cost(R, ls), lambda R: ls_gradient(R, ls), np.eye(3), opts)


def ml_cost(R: np.ndarray, ms: MeasurementSet) -> float:
    """Negative log-likelihood up to a constant: ``-kappa^T cos(theta_hat - theta(R))``."""
    el, az = angles_from_offsets(R, ms._d, ms._dist)
    return -float(
        ms.kappas[0::2] @ np.cos(ms.theta_hat[0::2] - el)
        + ms.kappas[1::2] @ np.cos(ms.theta_hat[1::2] - az)
    )


def ml_gradient(R: np.ndarray, ms: MeasurementSet) -> np.ndarray:
    """Euclidean gradient of :func:`ml_cost`.

    ``-sum_m kappa sin(theta_hat - theta(R)) dtheta/dR`` over both angles of
    every BS. Raises :class:`~orient3d.geometry.SingularGradientError` on a
    ray along the local Z axis.
    """
    el, az = angles_from_offsets(R, ms._d, ms._dist)
    _, el_col3, az_col1, az_col2 = gradient_columns_from_units(R, ms._units)
    w_el = -ms.kappas[0::2] * np.sin(ms.theta_hat[0::2] - el)
    w_az = -ms.kappas[1::2] * np.sin(ms.theta_hat[1::2] - az)
    G = np.empty((3, 3))
    G[:, 0] = w_az @ az_col1
    G[:, 1] = w_az @ az_col2
    G[:, 2] = w_el @ el_col3
    return G


def ml_estimate(ms: MeasurementSet, init: np.ndarray, opts: ManifoldOptions | None = None) -> OptimizeReport:
    """ML refinement over all BSs, starting from ``init`` (normally the LS estimate).

    If a ray passes through the local Z axis along the way the search stops
    and the best iterate so far is returned with ``converged=False``.
    """

    def grad(R):
        try:
            return ml_gradient(R, ms)
        except SingularGradientError as exc:
            raise AbortOptimization(str(exc)) from exc

    return minimize(lambda R: ml_cost(R, ms), grad, init, opts)


def select_bs_subset(ms: MeasurementSet, k: int = 2) -> list[int]:
    """Pick ``k`` BSs for the LS fit.

    Only subsets whose UE->BS directions are pairwise non-collinear qualify.
    The score is the sum of the two smallest concentrations in the subset;
    ties go to the lexicographically first subset.
    """
    if not 2 <= k <= ms.n_bs:
        raise ValueError(f"subset size must lie in [2, {ms.n_bs}], got {k}")
    offsets = ms.offsets()
    best, best_score = None, -math.inf
    for combo in itertools.combinations(range(ms.n_bs), k):
        if not all(_pair_ok(offsets[a], offsets[b]) for a, b in itertools.combinations(combo, 2)):
            continue
        kap = np.sort(np.concatenate([ms.kappas[2 * m : 2 * m + 2] for m in combo]))
        score = float(kap[0] + kap[1])
        if score > best_score:
            best, best_score = list(combo), score
    if best is None:
        raise EstimationError("degenerate geometry: no admissible BS subset")
    return best
