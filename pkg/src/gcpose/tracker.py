"""Single-path homotopy continuation over a straight-line system blend.

The tracker deforms a solved start system G into a target system F along
H(x, t) = (1 - t) G(x) + t F(x) while following one root x(t) from t = 0 to
t = 1 with a predictor-corrector scheme: a fourth-order Runge-Kutta step on
the path ODE dx/dt = -J_H(x, t)^+ (F(x) - G(x)), then Gauss-Newton
corrections back onto the path.  All pseudo-inverse applications are
least-squares solves, so overdetermined systems are tracked in the
least-squares sense.  A Levenberg-Marquardt local refiner is included as the
baseline alternative to continuation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Protocol, runtime_checkable

import numpy as np

# Corrector iterations stall once steps shrink below this relative size;
# further iterations cannot improve an inconsistent least-squares target.
_STEP_FLOOR = 1e-14


class SingularJacobianError(RuntimeError):
    """Raised when the system Jacobian loses column rank along the path."""


@runtime_checkable
class PolySystem(Protocol):
    """Evaluable square-or-overdetermined polynomial system."""

    n_vars: int
    n_eqs: int

    def evaluate(self, x: np.ndarray) -> np.ndarray: ...

    def jacobian(self, x: np.ndarray) -> np.ndarray: ...


def eval_with_jacobian(system: PolySystem, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Residual and Jacobian together, using a fused method when available."""
    fused = getattr(system, "evaluate_with_jacobian", None)
    if fused is not None:
        return fused(x)
    return system.evaluate(x), system.jacobian(x)


class TrackStatus(Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    SINGULAR_JACOBIAN = "singular_jacobian"
    MAX_STEPS_EXCEEDED = "max_steps_exceeded"
    # Path completed but the terminal residual stayed above tolerance.  This
    # is the expected terminal state for inconsistent (noisy, overdetermined)
    # targets whose least-squares optimum has a nonzero residual.
    NO_CONVERGENCE = "no_convergence"


@dataclass(frozen=True)
class TrackerConfig:
    step_size: float
    max_newton_iters: int = 5
    newton_tol: float = 1e-10
    divergence_radius: float = 1e4
    singular_tol: float = 1e-12

    def __post_init__(self):
        if not 0.0 < self.step_size <= 0.5:
            raise ValueError("step_size must be in (0, 0.5]")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")


@dataclass(frozen=True)
class TrackResult:
    status: TrackStatus
    x_final: np.ndarray
    final_residual_norm: float
    steps_taken: int

    @property
    def converged(self) -> bool:
        return self.status is TrackStatus.CONVERGED


@dataclass(frozen=True)
class Homotopy:
    """Straight-line blend of two systems with matching dimensions."""

    start: PolySystem
    target: PolySystem

    def __post_init__(self):
        if (self.start.n_vars, self.start.n_eqs) != (self.target.n_vars, self.target.n_eqs):
            raise ValueError("start and target systems must have identical shape")

    @property
    def n_vars(self) -> int:
        return self.start.n_vars

    @property
    def n_eqs(self) -> int:
        return self.start.n_eqs

    def evaluate(self, x: np.ndarray, t: float) -> np.ndarray:
        return (1.0 - t) * self.start.evaluate(x) + t * self.target.evaluate(x)

    def jacobian(self, x: np.ndarray, t: float) -> np.ndarray:
        return (1.0 - t) * self.start.jacobian(x) + t * self.target.jacobian(x)

    def t_derivative(self, x: np.ndarray) -> np.ndarray:
        """Partial of the blend in t: F(x) - G(x), independent of t."""
        return self.target.evaluate(x) - self.start.evaluate(x)

    def evaluate_full(self, x: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(H, J_H, dH/dt) from one evaluation of each endpoint system."""
        rg, jg = eval_with_jacobian(self.start, x)
        rf, jf = eval_with_jacobian(self.target, x)
        return (1.0 - t) * rg + t * rf, (1.0 - t) * jg + t * jf, rf - rg


def _solve_least_squares(jac: np.ndarray, rhs: np.ndarray, singular_tol: float) -> np.ndarray:
    """Minimum-norm least-squares solve with a smallest-singular-value guard."""
    sol, _, _, svals = np.linalg.lstsq(jac, rhs, rcond=None)
    if svals[-1] < singular_tol:
        raise SingularJacobianError("rank-deficient Jacobian")
    return sol


def predict_step(
    homotopy: Homotopy, x: np.ndarray, t: float, dt: float, config: TrackerConfig
) -> np.ndarray:
    """Classical RK4 integration of the path ODE from t to t + dt."""

    def velocity(xk: np.ndarray, tk: float) -> np.ndarray:
        _, jac, dh_dt = homotopy.evaluate_full(xk, tk)
        return -_solve_least_squares(jac, dh_dt, config.singular_tol)

    k1 = velocity(x, t)
    k2 = velocity(x + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = velocity(x + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = velocity(x + dt * k3, t + dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def newton_correct(
    homotopy: Homotopy,
    x: np.ndarray,
    t: float,
    config: TrackerConfig,
    max_iters: int | None = None,
) -> tuple[np.ndarray, bool]:
    """Gauss-Newton corrections x <- x - J_H^+ H(x, t) at fixed t.

    Returns the corrected point and whether the residual dropped below
    ``newton_tol``.  Iteration stops early when steps stall, which is the
    terminal behavior on inconsistent least-squares targets.
    """
    iters = config.max_newton_iters if max_iters is None else max_iters
    x = np.array(x, dtype=float)
    residual, jac, _ = homotopy.evaluate_full(x, t)
    for _ in range(iters):
        if np.linalg.norm(residual) <= config.newton_tol:
            return x, True
        step = _solve_least_squares(jac, residual, config.singular_tol)
        x = x - step
        residual, jac, _ = homotopy.evaluate_full(x, t)
        if np.linalg.norm(step) <= _STEP_FLOOR * (1.0 + np.linalg.norm(x)):
            break
    return x, bool(np.linalg.norm(residual) <= config.newton_tol)


def track_path(homotopy: Homotopy, x0: np.ndarray, config: TrackerConfig) -> TrackResult:
    """Track a start-system root to the target system.

    Slides t from 0 to 1 in fixed steps (the final step is clipped to land
    exactly on t = 1); each step runs the RK4 predictor then the Gauss-Newton
    corrector.  A terminal corrector pass at t = 1 with three times the
    per-step iteration budget polishes the root.  The result is CONVERGED
    only when the final target residual satisfies
    |F(x)| <= newton_tol * max(1, |x|).
    """
    x = np.array(x0, dtype=float)
    steps = 0
    try:
        # Snap onto the start root if the caller handed in a nearby point.
        if np.linalg.norm(homotopy.start.evaluate(x)) > 10.0 * config.newton_tol:
            x, _ = newton_correct(homotopy, x, 0.0, config)
        t = 0.0
        while t < 1.0:
            dt = min(config.step_size, 1.0 - t)
            x = predict_step(homotopy, x, t, dt, config)
            if np.linalg.norm(x) > config.divergence_radius:
                return TrackResult(TrackStatus.DIVERGED, x, float("inf"), steps)
            t = 1.0 if t + dt >= 1.0 - 1e-12 else t + dt
            x, _ = newton_correct(homotopy, x, t, config)
            steps += 1
            if np.linalg.norm(x) > config.divergence_radius:
                return TrackResult(TrackStatus.DIVERGED, x, float("inf"), steps)
        x, _ = newton_correct(homotopy, x, 1.0, config, max_iters=3 * config.max_newton_iters)
    except SingularJacobianError:
        residual = float(np.linalg.norm(homotopy.target.evaluate(x)))
        return TrackResult(TrackStatus.SINGULAR_JACOBIAN, x, residual, steps)
    residual = float(np.linalg.norm(homotopy.target.evaluate(x)))
    if residual <= config.newton_tol * max(1.0, float(np.linalg.norm(x))):
        status = TrackStatus.CONVERGED
    else:
        status = TrackStatus.NO_CONVERGENCE
    return TrackResult(status, x, residual, steps)


def lm_refine(system: PolySystem, x0: np.ndarray, max_iters: int = 100) -> tuple[np.ndarray, float]:
    """Levenberg-Marquardt minimization of |F(x)|^2 from x0.

    Damping starts at 1e-3, grows 10x on rejected steps and shrinks 10x on
    accepted ones; stops when the step drops below 1e-12 or on the iteration
    cap.  Returns the best iterate and its residual norm.
    """
    x = np.array(x0, dtype=float)
    lam = 1e-3
    residual = system.evaluate(x)
    cost = float(residual @ residual)
    for _ in range(max_iters):
        jac = system.jacobian(x)
        jtj = jac.T @ jac
        grad = jac.T @ residual
        try:
            step = np.linalg.solve(jtj + lam * np.eye(system.n_vars), grad)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        if np.linalg.norm(step) < 1e-12:
            break
        candidate = x - step
        cand_residual = system.evaluate(candidate)
        cand_cost = float(cand_residual @ cand_residual)
        if cand_cost < cost:
            x, residual, cost = candidate, cand_residual, cand_cost
            lam = max(lam / 10.0, 1e-12)
        else:
            lam *= 10.0
    return x, float(np.linalg.norm(residual))
