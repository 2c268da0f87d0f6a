"""Von Mises angle statistics: density, sampling, Fisher information."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "VonMises",
    "bessel_i0e",
    "bessel_i1e",
    "bessel_ratio",
    "fisher_info",
    "log_pdf",
    "measurement_log_likelihood",
    "sample",
    "sample_angles",
    "solve_concentration",
]

_SWITCH = 15.0
_SERIES_TERMS = 60
_ASYMPTOTIC_TERMS = 30
_KAPPA_CAP = 1e12


@dataclass(frozen=True)
class VonMises:
    mu: float
    kappa: float

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")


def _series_scaled(x: np.ndarray, order: int) -> np.ndarray:
    # exp(-x) * sum_k (x/2)^(2k+order) / (k! (k+order)!)
    half = x / 2.0
    term = half**order / math.factorial(order)
    total = term.copy()
    quarter_sq = half * half
    for k in range(1, _SERIES_TERMS):
        term = term * quarter_sq / (k * (k + order))
        total += term
    return total * np.exp(-x)


def _asymptotic_scaled(x: np.ndarray, order: int) -> np.ndarray:
    # exp(-x) I_n(x) ~ (2 pi x)^(-1/2) sum_k c_k,
    # c_k = -c_{k-1} (4n^2 - (2k-1)^2) / (8 k x)
    mu4 = 4.0 * order * order
    coef = np.ones_like(x)
    total = coef.copy()
    for k in range(1, _ASYMPTOTIC_TERMS + 1):
        coef = -coef * (mu4 - (2 * k - 1) ** 2) / (8.0 * k * x)
        total += coef
    return total / np.sqrt(2.0 * np.pi * x)


def _scalar_scaled(x: float, order: int) -> float:
    if x < _SWITCH:
        half = 0.5 * x
        term = half**order / math.factorial(order)
        total = term
        q = half * half
        k = 1
        while term > 1e-17 * total and k < _SERIES_TERMS:
            term *= q / (k * (k + order))
            total += term
            k += 1
        return total * math.exp(-x)
    mu4 = 4.0 * order * order
    coef = total = 1.0
    for k in range(1, _ASYMPTOTIC_TERMS + 1):
        coef *= -(mu4 - (2 * k - 1) ** 2) / (8.0 * k * x)
        total += coef
        if abs(coef) < 1e-17 * abs(total):
            break
    return total / math.sqrt(2.0 * math.pi * x)


def _scaled_bessel(x, order: int):
    if isinstance(x, (float, int)):
        if x < 0:
            raise ValueError("argument must be non-negative")
        return _scalar_scaled(float(x), order)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("argument must be non-negative")
    out = np.empty_like(x)
    small = x < _SWITCH
    out[small] = _series_scaled(x[small], order)
    out[~small] = _asymptotic_scaled(x[~small], order)
    return out if out.ndim else float(out)


def bessel_i0e(x):
    """Exponentially scaled modified Bessel function ``exp(-x) I0(x)``, x >= 0."""
    return _scaled_bessel(x, 0)


def bessel_i1e(x):
    """Exponentially scaled modified Bessel function ``exp(-x) I1(x)``, x >= 0."""
    return _scaled_bessel(x, 1)


def bessel_ratio(x):
    """``I1(x) / I0(x)`` without overflow."""
    return np.divide(bessel_i1e(x), bessel_i0e(x))


def log_pdf(d: VonMises, x):
    """``kappa cos(x - mu) - ln(2 pi I0(kappa))``."""
    log_i0 = math.log(bessel_i0e(d.kappa)) + d.kappa
    return d.kappa * np.cos(np.asarray(x) - d.mu) - math.log(2.0 * math.pi) - log_i0


def fisher_info(kappa):
    """Fisher information of the mean direction, ``kappa I1(kappa)/I0(kappa)``."""
    if isinstance(kappa, (float, int)):
        if kappa < 0:
            raise ValueError("kappa must be non-negative")
        return kappa * _scalar_scaled(kappa, 1) / _scalar_scaled(kappa, 0) if kappa > 0 else 0.0
    kappa = np.asarray(kappa, dtype=float)
    out = kappa * bessel_ratio(kappa)
    return out if np.ndim(out) else float(out)


def solve_concentration(target_info: float) -> float:
    """Concentration whose Fisher information equals ``target_info``.

    Safeguarded Newton on ``k -> k A(k)``, ``A = I1/I0``, whose derivative
    is ``k (1 - A^2)``.
    """
    target = float(target_info)
    if not target > 0:
        raise ValueError(f"non-positive information: {target_info}")
    # fisher_info(k) < k, so the root exceeds the target; it is ~ k - 1/2 for large k
    lo, hi = 0.0, target + 1.0
    while fisher_info(hi) < target:
        lo, hi = hi, 2.0 * hi
        if hi > _KAPPA_CAP:
            raise OverflowError(f"concentration overflow for target {target_info}")
    if hi > _KAPPA_CAP:
        raise OverflowError(f"concentration overflow for target {target_info}")
    # fisher_info(k) ~ k^2/2 near zero and ~ k - 1/2 far out
    k = math.sqrt(2.0 * target) if target < 0.5 else target + 0.5
    k = min(max(k, lo), hi)
    for _ in range(200):
        ratio = _scalar_scaled(k, 1) / _scalar_scaled(k, 0) if k > 0 else 0.0
        resid = k * ratio - target
        if resid > 0:
            hi = k
        else:
            lo = k
        if abs(resid) <= 1e-15 * target:
            return k
        slope = k * (1.0 - ratio * ratio)
        step = k - resid / slope if slope > 0 else math.nan
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if step == k or hi - lo <= 4e-16 * hi:
            return step
        k = step
    return k


def measurement_log_likelihood(theta_hat, theta, kappas) -> float:
    """Unnormalised joint log-likelihood ``kappa^T cos(theta_hat - theta)``."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta = np.asarray(theta, dtype=float)
    kappas = np.asarray(kappas, dtype=float)
    if not (theta_hat.shape == theta.shape == kappas.shape):
        raise ValueError(
            f"length mismatch: {theta_hat.shape}, {theta.shape}, {kappas.shape}"
        )
    return float(kappas @ np.cos(theta_hat - theta))


def _wrap(x: np.ndarray) -> np.ndarray:
    # map to (-pi, pi]
    return np.pi - np.mod(np.pi - x, 2.0 * np.pi)


def sample_angles(mu, kappa, rng: np.random.Generator) -> np.ndarray:
    """Draw one von Mises angle per broadcast element of ``(mu, kappa)``.

    Best-Fisher wrapped-Cauchy rejection; uniform below ``kappa = 1e-8`` and
    a wrapped normal above ``kappa = 1e6``. Results lie in (-pi, pi].
    """
    mu, kappa = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(kappa, dtype=float))
    if np.any(kappa < 0):
        raise ValueError("kappa must be non-negative")
    shape = mu.shape
    mu = mu.ravel()
    kappa = kappa.ravel()
    out = np.empty(mu.size)

    uniform = kappa < 1e-8
    normal = kappa > 1e6
    body = ~(uniform | normal)

    out[uniform] = np.pi * (2.0 * rng.random(int(uniform.sum())) - 1.0)
    out[normal] = mu[normal] + rng.standard_normal(int(normal.sum())) / np.sqrt(kappa[normal])

    k = kappa[body]
    s = np.empty_like(k)
    tiny = k < 1e-5
    s[tiny] = 1.0 / k[tiny] + k[tiny]
    kk = k[~tiny]
    r = 1.0 + np.sqrt(1.0 + 4.0 * kk * kk)
    rho = (r - np.sqrt(2.0 * r)) / (2.0 * kk)
    s[~tiny] = (1.0 + rho * rho) / (2.0 * rho)

    w = np.empty_like(k)
    pending = np.arange(k.size)
    while pending.size:
        u = rng.random(pending.size)
        v = rng.random(pending.size)
        sp, kp = s[pending], k[pending]
        z = np.cos(np.pi * u)
        wp = (1.0 + sp * z) / (sp + z)
        y = kp * (sp - wp)
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = (y * (2.0 - y) - v >= 0) | (np.log(y / v) + 1.0 - y >= 0)
        w[pending[accept]] = wp[accept]
        pending = pending[~accept]
    sign = np.where(rng.random(k.size) < 0.5, -1.0, 1.0)
    out[body] = mu[body] + sign * np.arccos(np.clip(w, -1.0, 1.0))

    return _wrap(out).reshape(shape)


def sample(d: VonMises, rng: np.random.Generator, size=None):
    """Sample ``size`` angles (a float when ``size`` is None)."""
    if size is None:
        return float(sample_angles(d.mu, d.kappa, rng))
    return sample_angles(np.full(size, d.mu), d.kappa, rng)
