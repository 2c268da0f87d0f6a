"""Constrained Fisher information of the rotation matrix and the orientation error bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import SingularGradientError, aoa_jacobian
from .vonmises import fisher_info

__all__ = [
    "FimBundle",
    "SingularInformationError",
    "constrained_crb",
    "constraint_basis",
    "fim_bundle",
    "measurement_fim",
    "oeb",
    "orientation_fim",
    "orthogonality_constraints",
    "orthogonality_jacobian",
]

COND_LIMIT = 1e12


class SingularInformationError(ArithmeticError):
    """``M^T I(r) M`` is not safely invertible; the bound is infinite."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


@dataclass
class FimBundle:
    i_theta: np.ndarray
    upsilon: np.ndarray
    i_r: np.ndarray
    m_basis: np.ndarray
    crb: np.ndarray | None
    oeb: float
    min_eigenvalue: float

    @property
    def singular(self) -> bool:
        return math.isinf(self.oeb)


def measurement_fim(kappas) -> np.ndarray:
    """Diagonal FIM of the stacked AoAs, ``diag(kappa I1(kappa)/I0(kappa))``."""
    kappas = np.asarray(kappas, dtype=float)
    if np.any(kappas < 0):
        raise ValueError("concentrations must be non-negative")
    return np.diag(np.atleast_1d(fisher_info(kappas)))


def orthogonality_constraints(R: np.ndarray) -> np.ndarray:
    """The six constraints ``h(r)`` encoding ``R^T R = I``."""
    r1, r2, r3 = np.asarray(R, dtype=float).T
    return np.array([r1 @ r1 - 1, r2 @ r1, r3 @ r1, r2 @ r2 - 1, r2 @ r3, r3 @ r3 - 1])


def orthogonality_jacobian(R: np.ndarray) -> np.ndarray:
    """``d h / d r^T`` as a ``6 x 9`` matrix."""
    r1, r2, r3 = np.asarray(R, dtype=float).T
    z = np.zeros(3)
    return np.array(
        [
            np.concatenate([2 * r1, z, z]),
            np.concatenate([r2, r1, z]),
            np.concatenate([r3, z, r1]),
            np.concatenate([z, 2 * r2, z]),
            np.concatenate([z, r3, r2]),
            np.concatenate([z, z, 2 * r3]),
        ]
    )


def constraint_basis(R: np.ndarray) -> np.ndarray:
    """Orthonormal ``9 x 3`` basis of the tangent directions of ``vec(R)``.

    Columns are ``[-r3; 0; r1]``, ``[0; -r3; r2]`` and ``[r2; -r1; 0]``,
    each divided by sqrt(2) so that ``M^T M = I``.
    """
    r1, r2, r3 = np.asarray(R, dtype=float).T
    z = np.zeros(3)
    m = np.column_stack(
        [
            np.concatenate([-r3, z, r1]),
            np.concatenate([z, -r3, r2]),
            np.concatenate([r2, -r1, z]),
        ]
    )
    return m / math.sqrt(2.0)


def constrained_crb(i_r: np.ndarray, m_basis: np.ndarray) -> np.ndarray:
    """``M (M^T I M)^-1 M^T``.

    Raises
    ------
    SingularInformationError
        When ``M^T I M`` has a non-positive eigenvalue or a condition number
        above 1e12.
    """
    reduced = m_basis.T @ i_r @ m_basis
    reduced = 0.5 * (reduced + reduced.T)
    eig = np.linalg.eigvalsh(reduced)
    if eig[0] <= 0 or eig[-1] > COND_LIMIT * eig[0]:
        raise SingularInformationError(
            f"reduced FIM is singular (eigenvalues {eig})", min_eigenvalue=float(eig[0])
        )
    crb = m_basis @ np.linalg.solve(reduced, m_basis.T)
    return 0.5 * (crb + crb.T)


def orientation_fim(R: np.ndarray, p_ue, bs_positions, kappas) -> np.ndarray:
    """Unconstrained ``9 x 9`` FIM of ``vec(R)``: ``Y I(theta) Y^T``."""
    upsilon = aoa_jacobian(R, p_ue, bs_positions)
    return upsilon @ measurement_fim(kappas) @ upsilon.T


def fim_bundle(R: np.ndarray, p_ue, bs_positions, kappas) -> FimBundle:
    """All intermediate quantities of the bound; ``oeb`` is ``inf`` when singular."""
    i_theta = measurement_fim(kappas)
    upsilon = aoa_jacobian(R, p_ue, bs_positions)
    if upsilon.shape[1] != i_theta.shape[0]:
        raise ValueError(f"{i_theta.shape[0]} concentrations for {upsilon.shape[1]} angles")
    i_r = upsilon @ i_theta @ upsilon.T
    i_r = 0.5 * (i_r + i_r.T)
    m_basis = constraint_basis(R)
    try:
        crb = constrained_crb(i_r, m_basis)
    except SingularInformationError as exc:
        return FimBundle(i_theta, upsilon, i_r, m_basis, None, math.inf, exc.min_eigenvalue)
    min_eig = float(np.linalg.eigvalsh(m_basis.T @ i_r @ m_basis)[0])
    value = math.sqrt(max(float(np.trace(crb)), 0.0))
    return FimBundle(i_theta, upsilon, i_r, m_basis, crb, value, min_eig)


def oeb(R: np.ndarray, p_ue, bs_positions, kappas) -> float:
    """Orientation error bound ``sqrt(trace(CRB))``; ``inf`` when the FIM is singular.

    A ray along the local Z axis makes the AoA Jacobian undefined, which is
    also reported as ``inf``.
    """
    try:
        return fim_bundle(R, p_ue, bs_positions, kappas).oeb
    except SingularGradientError:
        return math.inf
