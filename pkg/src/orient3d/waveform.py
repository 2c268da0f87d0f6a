"""Uniform planar array model and SNR-to-concentration calibration.

The beamformed downlink model collapses each BS into a single composite SNR
(``|alpha|^2 T N_tx P / N0``), so the waveform Fisher information of the two
AoAs of one link only needs the UE array geometry and that SNR.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import AoaPair
from .vonmises import solve_concentration

__all__ = [
    "CalibrationError",
    "Upa",
    "aoa_fim_waveform",
    "calibrate_concentrations",
    "db_to_linear",
    "steering_derivatives",
    "steering_vector",
    "target_information",
]

# 2x2 waveform FIMs with a larger condition number count as singular
_COND_LIMIT = 1e12


class CalibrationError(ValueError):
    """The waveform FIM of a link is singular, so no concentration exists."""

    def __init__(self, message: str, bs_index: int | None = None, aoa: AoaPair | None = None):
        super().__init__(message)
        self.bs_index = bs_index
        self.aoa = aoa


@dataclass(frozen=True)
class Upa:
    """Uniform planar array in the local XY plane.

    ``spacing`` is in carrier wavelengths. With ``centered`` the element
    indices run over ``i - (n - 1)/2``; otherwise they start at the corner.
    """

    nx: int = 16
    ny: int = 16
    spacing: float = 0.5
    centered: bool = True

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"array size must be positive, got {self.nx}x{self.ny}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    def element_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-element (x, y) indices, x-major ordering."""
        ix = np.arange(self.nx, dtype=float)
        iy = np.arange(self.ny, dtype=float)
        if self.centered:
            ix -= (self.nx - 1) / 2.0
            iy -= (self.ny - 1) / 2.0
        gx, gy = np.meshgrid(ix, iy, indexing="ij")
        return gx.ravel(), gy.ravel()


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def _direction_cosines(el: float, az: float):
    se, ce = np.sin(el), np.cos(el)
    sa, ca = np.sin(az), np.cos(az)
    # u, v and their derivatives w.r.t. (el, az)
    return (se * ca, se * sa), ((ce * ca, -se * sa), (ce * sa, se * ca))


def steering_vector(upa: Upa, aoa: AoaPair | Sequence[float]) -> np.ndarray:
    """Array response ``exp(j 2 pi d (i u + k v))``, u = sin(el)cos(az), v = sin(el)sin(az)."""
    el, az = aoa
    ix, iy = upa.element_indices()
    (u, v), _ = _direction_cosines(el, az)
    return np.exp(2j * np.pi * upa.spacing * (ix * u + iy * v))


def steering_derivatives(upa: Upa, aoa: AoaPair | Sequence[float]) -> np.ndarray:
    """``(N, 2)`` matrix with columns ``da/d(el)`` and ``da/d(az)``."""
    el, az = aoa
    ix, iy = upa.element_indices()
    (u, v), ((du_el, du_az), (dv_el, dv_az)) = _direction_cosines(el, az)
    phase = 2j * np.pi * upa.spacing
    a = np.exp(phase * (ix * u + iy * v))
    d_el = phase * (ix * du_el + iy * dv_el) * a
    d_az = phase * (ix * du_az + iy * dv_az) * a
    return np.column_stack([d_el, d_az])


def aoa_fim_waveform(upa: Upa, aoa: AoaPair | Sequence[float], snr: float) -> np.ndarray:
    """Fisher information of ``(el, az)`` from one beamformed link.

    ``2 SNR Re{D^H (I - a a^H / |a|^2) D}``: the complex channel gain is a
    nuisance parameter, eliminated through the orthogonal projector.
    ``snr`` is linear.
    """
    if snr < 0:
        raise ValueError(f"SNR must be non-negative, got {snr}")
    a = steering_vector(upa, aoa)
    D = steering_derivatives(upa, aoa)
    proj = a.conj() @ D / np.vdot(a, a).real
    D_perp = D - np.outer(a, proj)
    fim = 2.0 * snr * np.real(D.conj().T @ D_perp)
    return 0.5 * (fim + fim.T)


def target_information(fim: np.ndarray) -> np.ndarray:
    """Per-angle information ``1 / diag(fim^-1)``; raises if ``fim`` is singular."""
    eig = np.linalg.eigvalsh(fim)
    if eig[0] <= 0 or eig[-1] > _COND_LIMIT * eig[0]:
        raise CalibrationError(f"singular 2x2 waveform FIM (eigenvalues {eig})")
    return 1.0 / np.diag(np.linalg.inv(fim))


def calibrate_concentrations(upa: Upa, aoas: Sequence[AoaPair], snrs: Sequence[float]) -> np.ndarray:
    """Von Mises concentrations matching the waveform CRB of every angle.

    For each link the 2x2 waveform FIM is inverted, the diagonal of the
    inverse is re-inverted into a per-angle information value, and that value
    is mapped to kappa. Output is ordered ``(el_1, az_1, el_2, az_2, ...)``.
    """
    if len(aoas) != len(snrs):
        raise ValueError(f"{len(aoas)} AoAs but {len(snrs)} SNR values")
    kappas = np.empty(2 * len(aoas))
    for m, (aoa, snr) in enumerate(zip(aoas, snrs)):
        aoa = AoaPair(*aoa)
        try:
            info = target_information(aoa_fim_waveform(upa, aoa, snr))
        except CalibrationError as exc:
            raise CalibrationError(
                f"BS {m}: {exc} at el={aoa.el:.6g}, az={aoa.az:.6g}", bs_index=m, aoa=aoa
            ) from None
        kappas[2 * m] = solve_concentration(info[0])
        kappas[2 * m + 1] = solve_concentration(info[1])
    return kappas
