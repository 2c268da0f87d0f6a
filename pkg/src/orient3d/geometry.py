"""Rotation representations, the AoA forward model and its gradients.

Conventions
-----------
* Rotations are plain ``(3, 3)`` float arrays. ``R = Rz(alpha) @ Ry(beta) @ Rx(gamma)``.
* ``R`` maps local (UE) coordinates to global ones, so a global direction ``d``
  is seen locally as ``R.T @ d``.
* ``vec(R)`` stacks columns (Fortran order); every 9-vector in the package
  uses that ordering.
* Elevation is measured from the local +Z axis (array normal), azimuth from
  the local +X axis towards +Y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "AoaPair",
    "EulerAngles",
    "GeometryError",
    "SingularGradientError",
    "aoa_from_geometry",
    "aoa_gradients",
    "aoa_jacobian",
    "aoa_many",
    "euler_to_rotation",
    "is_rotation",
    "q_from_aoa",
    "random_rotation",
    "rot_x",
    "rot_y",
    "rot_z",
    "rotation_to_euler",
    "vec",
]

_ACOS_TOL = 1e-12
# sin(el)^2 below this is treated as a ray along the local Z axis.
_POLE_TOL = 1e-20
_GIMBAL_TOL = 1e-12


class GeometryError(ValueError):
    """Raised for degenerate geometric configurations."""


class SingularGradientError(GeometryError):
    """The AoA gradient does not exist (ray along the local +/-Z axis)."""

    def __init__(self, message: str, bs_index: int | None = None):
        super().__init__(message)
        self.bs_index = bs_index


@dataclass(frozen=True)
class EulerAngles:
    """Z-Y'-X'' Euler (Tait-Bryan) angles in radians."""

    alpha: float
    beta: float
    gamma: float

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma])


class AoaPair(NamedTuple):
    el: float
    az: float


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def euler_to_rotation(o: EulerAngles | Sequence[float]) -> np.ndarray:
    """Rotation matrix ``Rz(alpha) Ry(beta) Rx(gamma)``."""
    if isinstance(o, EulerAngles):
        alpha, beta, gamma = o.alpha, o.beta, o.gamma
    else:
        alpha, beta, gamma = (float(v) for v in o)
    return rot_z(alpha) @ rot_y(beta) @ rot_x(gamma)


def _canonical(angle: float) -> float:
    # atan2 may return -pi; the canonical range is (-pi, pi].
    return math.pi if angle <= -math.pi else angle


def rotation_to_euler(R: np.ndarray) -> EulerAngles:
    """Inverse of :func:`euler_to_rotation`.

    At gimbal lock (``|beta| = pi/2``) gamma is set to zero and the whole
    rotation about the vertical is folded into alpha.
    """
    R = np.asarray(R, dtype=float)
    cos_beta = math.hypot(R[0, 0], R[1, 0])
    beta = math.atan2(-R[2, 0], cos_beta)
    if cos_beta < _GIMBAL_TOL:
        alpha = math.atan2(-R[0, 1], R[1, 1])
        gamma = 0.0
    else:
        alpha = math.atan2(R[1, 0], R[0, 0])
        gamma = math.atan2(R[2, 1], R[2, 2])
    return EulerAngles(_canonical(alpha), beta, _canonical(gamma))


def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    ortho = np.linalg.norm(R.T @ R - np.eye(3))
    return bool(ortho <= tol and abs(np.linalg.det(R) - 1.0) <= tol)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform rotation from a unit quaternion."""
    q = rng.standard_normal(4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def vec(R: np.ndarray) -> np.ndarray:
    """Column-stacked 9-vector ``[r1; r2; r3]``."""
    return np.asarray(R).reshape(-1, order="F")


def _safe_arccos(x: np.ndarray) -> np.ndarray:
    if np.any(np.abs(x) > 1.0 + _ACOS_TOL):
        raise GeometryError(f"arccos argument outside [-1, 1]: {x}")
    return np.arccos(np.clip(x, -1.0, 1.0))


def _offsets(p_ue, bs_positions) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p_ue, dtype=float).reshape(3)
    d = np.atleast_2d(np.asarray(bs_positions, dtype=float)) - p
    dist = np.linalg.norm(d, axis=1)
    if np.any(dist == 0.0):
        idx = int(np.flatnonzero(dist == 0.0)[0])
        raise GeometryError(f"degenerate geometry: BS {idx} coincides with the UE")
    return d, dist


def angles_from_offsets(R: np.ndarray, d: np.ndarray, dist: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """AoAs from precomputed offsets ``d[m] = p_m - p`` and their norms."""
    q = d @ R  # row m is (R.T @ d_m).T
    el = _safe_arccos(q[:, 2] / dist)
    az = np.arctan2(q[:, 1], q[:, 0])
    return el, az


def aoa_many(R: np.ndarray, p_ue, bs_positions) -> tuple[np.ndarray, np.ndarray]:
    """Elevations and azimuths for every BS (arrays of length M)."""
    d, dist = _offsets(p_ue, bs_positions)
    return angles_from_offsets(R, d, dist)


def aoa_from_geometry(R: np.ndarray, p_ue, p_bs) -> AoaPair:
    """AoA of the ray from ``p_bs`` as seen in the UE frame.

    ``q = R.T (p_bs - p_ue)``, ``el = arccos(q_z/|q|)``, ``az = atan2(q_y, q_x)``.
    A ray exactly along the local Z axis gets ``az = 0``.
    """
    el, az = aoa_many(R, p_ue, np.reshape(p_bs, (1, 3)))
    return AoaPair(float(el[0]), float(az[0]))


def _local_components(R, p_ue, bs_positions):
    d, dist = _offsets(p_ue, bs_positions)
    u = -d / dist[:, None]  # unit vectors pointing from each BS to the UE
    return _local_from_units(R, u)


def _local_from_units(R, u):
    w = u @ R  # w[m, i] = u_i^T R^T u^(m)
    s2 = w[:, 0] ** 2 + w[:, 1] ** 2
    bad = np.flatnonzero(s2 < _POLE_TOL)
    if bad.size:
        idx = int(bad[0])
        raise SingularGradientError(
            f"azimuth gradient singular: ray from BS {idx} is along the local Z axis",
            bs_index=idx,
        )
    return u, w, s2


def gradient_columns(R, p_ue, bs_positions):
    """Non-zero columns of the AoA gradients for every BS.

    Returns ``(u, el_col3, az_col1, az_col2)``, each ``(M, 3)``. The elevation
    gradient is ``el_col3[m]`` placed in column 3; the azimuth gradient has
    ``az_col1[m]`` and ``az_col2[m]`` in columns 1 and 2.
    """
    return _columns(*_local_components(R, p_ue, bs_positions))


def gradient_columns_from_units(R, u):
    """:func:`gradient_columns` for precomputed unit vectors ``u[m] = (p - p_m)/|p - p_m|``."""
    return _columns(*_local_from_units(R, u))


def _columns(u, w, s2):
    el_col3 = u / np.sqrt(s2)[:, None]
    az_col1 = -(w[:, 1] / s2)[:, None] * u
    az_col2 = (w[:, 0] / s2)[:, None] * u
    return u, el_col3, az_col1, az_col2


def aoa_gradients(R: np.ndarray, p_ue, p_bs) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of elevation and azimuth with respect to the entries of ``R``.

    With ``u`` the unit vector from the BS to the UE and ``w = R.T u``::

        dEl/dR = u e3^T / sqrt(1 - w3^2)
        dAz/dR = (w1 u e2^T - w2 u e1^T) / (w1^2 + w2^2)

    Raises
    ------
    SingularGradientError
        If the ray lies along the local Z axis (el = 0 or pi).
    """
    _, el_col3, az_col1, az_col2 = gradient_columns(R, p_ue, np.reshape(p_bs, (1, 3)))
    d_el = np.zeros((3, 3))
    d_az = np.zeros((3, 3))
    d_el[:, 2] = el_col3[0]
    d_az[:, 0] = az_col1[0]
    d_az[:, 1] = az_col2[0]
    return d_el, d_az


def aoa_jacobian(R: np.ndarray, p_ue, bs_positions) -> np.ndarray:
    """Jacobian of the stacked AoAs w.r.t. ``vec(R)``, stored as ``9 x 2M``.

    Columns are ordered ``(el_1, az_1, el_2, az_2, ...)``.
    """
    bs = np.atleast_2d(np.asarray(bs_positions, dtype=float))
    _, el_col3, az_col1, az_col2 = gradient_columns(R, p_ue, bs)
    n_bs = bs.shape[0]
    jac = np.zeros((9, 2 * n_bs))
    jac[6:9, 0::2] = el_col3.T
    jac[0:3, 1::2] = az_col1.T
    jac[3:6, 1::2] = az_col2.T
    return jac


def q_from_aoa(aoa: AoaPair | Sequence[float], distance: float) -> np.ndarray:
    """Local-frame vector of length ``distance`` pointing along ``aoa``."""
    el, az = aoa
    s = math.sin(el)
    return distance * np.array([s * math.cos(az), s * math.sin(az), math.cos(el)])
