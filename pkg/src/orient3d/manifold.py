"""First-order Riemannian minimisation on SO(3).

Iterates ``X <- Ret_X(-t Proj_X(grad f(X)))`` with Armijo backtracking. The
trial step of the first iteration is ``initial_step``; later iterations start
from a Barzilai-Borwein estimate (``step_rule="bb"``) or always from
``initial_step`` (``step_rule="fixed"``). Trial steps are capped so the
tangent step has Frobenius norm at most 10. Either way the accepted step
satisfies the Armijo condition, so the cost sequence is monotone.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "AbortOptimization",
    "ManifoldOptions",
    "OptimizeReport",
    "minimize",
    "polar",
    "proj_tangent",
    "retract",
    "skew",
]

log = logging.getLogger(__name__)

_MAX_BACKTRACKS = 60
_DRIFT_TOL = 1e-8
# longest tangent step (Frobenius norm) tried; the polar retraction turns a
# step of norm sqrt(2) theta into a rotation by arctan(theta) < pi/2, so
# longer steps gain nothing
_MAX_STEP_NORM = 10.0
# tangent steps shorter than this cannot move a unit-norm rotation entry
_NULL_STEP = 4.0 * np.finfo(float).eps


class AbortOptimization(Exception):
    """Raised by a cost or gradient callback to stop :func:`minimize` early."""


@dataclass(frozen=True)
class ManifoldOptions:
    max_iters: int = 1000
    grad_tol: float = 1e-9
    initial_step: float = 1.0
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    step_rule: str = "bb"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.step_rule not in ("bb", "fixed"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")


@dataclass
class OptimizeReport:
    minimizer: np.ndarray
    iterations: int
    final_cost: float
    final_grad_norm: float
    converged: bool
    message: str = ""
    cost_history: list[float] = field(default_factory=list)
    step_history: list[float] = field(default_factory=list)
    # Riemannian gradient norm at the start of each accepted step
    grad_norm_history: list[float] = field(default_factory=list)


def skew(Z: np.ndarray) -> np.ndarray:
    return 0.5 * (Z - Z.T)


def proj_tangent(X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Orthogonal projection of ``U`` onto the tangent space at ``X``: ``X skew(X^T U)``."""
    return X @ skew(X.T @ U)


def retract(X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Polar retraction ``(X + U)(I + U^T U)^(-1/2)``.

    For ``U = X S`` with ``S`` skew of rotation angle ``phi`` this is ``X``
    times the rotation by ``arctan(phi)`` about the axis of ``S``, which is
    how it is evaluated: the Rodrigues form stays orthogonal to rounding
    level however long the step is.

    Raises
    ------
    ValueError
        If ``X^T U`` is not skew-symmetric to within 1e-8.
    """
    S = X.T @ U
    if np.abs(S + S.T).max() > 1e-8 * max(1.0, np.abs(U).max()):
        raise ValueError("not in tangent space")
    S = skew(S)
    phi = math.sqrt(0.5 * float(np.sum(S * S)))
    if phi == 0.0:
        return X.copy()
    K = S / phi
    root = math.sqrt(1.0 + phi * phi)
    sin_psi = phi / root
    # 1 - cos(arctan(phi)) without cancellation for small phi
    one_minus_cos = phi * phi / (root * (1.0 + root))
    return X @ (np.eye(3) + sin_psi * K + one_minus_cos * (K @ K))


def polar(A: np.ndarray) -> np.ndarray:
    """Nearest rotation to ``A`` (polar factor with determinant +1)."""
    W, _, Vt = np.linalg.svd(A)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(W @ Vt))])
    return W @ D @ Vt


def _orthogonality_residual(X: np.ndarray) -> float:
    return float(np.linalg.norm(X.T @ X - np.eye(3)))


def minimize(
    cost: Callable[[np.ndarray], float],
    euclidean_grad: Callable[[np.ndarray], np.ndarray],
    X0: np.ndarray,
    opts: ManifoldOptions | None = None,
) -> OptimizeReport:
    """Minimise ``cost`` over SO(3) starting from ``X0``.

    ``euclidean_grad`` returns the unconstrained 3x3 gradient; the Riemannian
    gradient is its tangent projection. Stops when the Riemannian gradient
    norm drops below ``grad_tol``, after ``max_iters`` iterations, when the
    line search fails, or when a callback raises :class:`AbortOptimization`.
    The returned minimizer is always the best iterate seen.
    """
    opts = opts or ManifoldOptions()
    X = np.array(X0, dtype=float)
    f = float(cost(X))
    costs = [f]
    steps: list[float] = []
    gnorms: list[float] = []
    try:
        g = proj_tangent(X, euclidean_grad(X))
    except AbortOptimization as exc:
        return OptimizeReport(X, 0, f, math.nan, False, f"aborted: {exc}", costs, steps, gnorms)
    gn = float(np.linalg.norm(g))
    trial = opts.initial_step

    for it in range(opts.max_iters):
        if gn < opts.grad_tol:
            return OptimizeReport(X, it, f, gn, True, "gradient tolerance reached", costs, steps, gnorms)

        gn2 = gn * gn
        t = min(trial, _MAX_STEP_NORM / gn)
        accepted = False
        try:
            for _ in range(_MAX_BACKTRACKS):
                if t * gn < _NULL_STEP:
                    # step below floating-point resolution; further halving is futile
                    break
                X_new = retract(X, -t * g)
                f_new = float(cost(X_new))
                if f_new <= f - opts.armijo_c * t * gn2:
                    accepted = True
                    break
                t *= opts.backtrack_factor
        except AbortOptimization as exc:
            return OptimizeReport(X, it, f, gn, False, f"aborted: {exc}", costs, steps, gnorms)
        if not accepted:
            return OptimizeReport(
                X, it, f, gn, False,
                "line search failed", costs, steps, gnorms,
            )

        if _orthogonality_residual(X_new) > _DRIFT_TOL:
            log.warning("iterate drifted off SO(3); re-orthonormalising")
            X_new = polar(X_new)
            f_new = float(cost(X_new))

        try:
            g_new = proj_tangent(X_new, euclidean_grad(X_new))
        except AbortOptimization as exc:
            # X_new passed the Armijo test, so it is the best iterate
            costs.append(f_new)
            steps.append(t)
            gnorms.append(gn)
            return OptimizeReport(X_new, it + 1, f_new, math.nan, False, f"aborted: {exc}", costs, steps, gnorms)

        if opts.step_rule == "bb":
            s = X_new - X
            y = g_new - proj_tangent(X_new, g)
            sy = float(np.sum(s * y))
            trial = float(np.sum(s * s)) / sy if sy > 0 else opts.initial_step
        costs.append(f_new)
        steps.append(t)
        gnorms.append(gn)
        X, f, g = X_new, f_new, g_new
        gn = float(np.linalg.norm(g))

    converged = gn < opts.grad_tol
    msg = "gradient tolerance reached" if converged else "iteration limit reached"
    return OptimizeReport(X, opts.max_iters, f, gn, converged, msg, costs, steps, gnorms)
