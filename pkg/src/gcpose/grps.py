"""Generalized relative pose and scale from 2D-2D correspondences.

Two generalized views observe the same points along rays (f, v) and
(f', v'); the views are related by a similarity (R, t, s) through
alpha * f + v = R (alpha' * f' + s v') + t.  Eliminating the depths with the
scalar triple product of the two Pluecker lines gives one polynomial
constraint per correspondence,

    t^T (f x R f') - s f^T R [v']_x f' + f^T [v]_x R f' = 0,

which is the coplanarity condition det[f | R f' | v - s R v' - t] = 0.
Stacking seven constraints (or eight, for the overdetermined variant that
disambiguates among the many real roots) plus the quaternion norm equation
gives the tracked system in the packed unknowns (q, t, s).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import (
    ROTATION_MONOMIAL_BASIS,
    Pose,
    Quaternion,
    quad_monomials,
    quad_monomials_jac,
    quat_to_rotmat,
    skew,
)
from .tracker import TrackerConfig, TrackResult, TrackStatus, track_path

_DEPTH_COND_LIMIT = 1e8


@dataclass(frozen=True)
class Correspondence2D2D:
    """Bearings and ray origins of one point seen in two generalized views."""

    f: np.ndarray
    v: np.ndarray
    f_prime: np.ndarray
    v_prime: np.ndarray

    def __post_init__(self):
        for name in ("f", "v", "f_prime", "v_prime"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3).copy())
        if abs(np.linalg.norm(self.f) - 1.0) > 1e-9 or abs(np.linalg.norm(self.f_prime) - 1.0) > 1e-9:
            raise ValueError("bearings must be unit norm")


def residual(c: Correspondence2D2D, q, t: np.ndarray, s: float) -> float:
    """The depth-free incidence constraint at a pose (rotation normalized)."""
    rot = quat_to_rotmat(q)
    t = np.asarray(t, dtype=float)
    rf = rot @ c.f_prime
    term1 = t @ np.cross(c.f, rf)
    term2 = float(s) * (c.f @ (rot @ (skew(c.v_prime) @ c.f_prime)))
    term3 = c.f @ (skew(c.v) @ rf)
    return float(term1 - term2 + term3)


def _stack(corrs: Sequence[Correspondence2D2D]):
    f = np.stack([c.f for c in corrs])
    v = np.stack([c.v for c in corrs])
    fp = np.stack([c.f_prime for c in corrs])
    vp = np.stack([c.v_prime for c in corrs])
    return f, v, fp, vp


class GrpsSystem:
    """Stacked incidence constraints plus the quaternion norm equation.

    The unknowns are packed as x = (q0..q3, t0..t2, s).  Each constraint is
    linear in t and s with coefficients quadratic in q, so the residuals are
    three decoupled contractions of per-correspondence constant tensors with
    the quadratic quaternion monomials; the Jacobian reuses the same tensors.
    """

    n_vars = 8

    def __init__(self, corrs: Sequence[Correspondence2D2D]):
        if len(corrs) not in (7, 8):
            raise ValueError("7 or 8 correspondences required")
        self.corrs = list(corrs)
        self.n_eqs = len(corrs) + 1
        f, v, fp, vp = _stack(self.corrs)
        # basis_fp[n,k] = B_k f'_n; one matrix-vector product per monomial.
        basis_fp = np.einsum("kab,nb->nka", ROTATION_MONOMIAL_BASIS, fp)
        # t-coefficients: f x (B_k f').
        self._a = np.cross(f[:, None, :], basis_fp)
        # s-coefficients: f . B_k (v' x f').
        w = np.cross(vp, fp)
        basis_w = np.einsum("kab,nb->nka", ROTATION_MONOMIAL_BASIS, w)
        self._b = np.einsum("na,nka->nk", f, basis_w)
        # constant-in-(t,s) term: (f x v) . (B_k f').
        u = np.cross(f, v)
        self._c = np.einsum("na,nka->nk", u, basis_fp)

    def _coefficients(self, t: np.ndarray, s: float) -> np.ndarray:
        return self._a @ t - s * self._b + self._c

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        q, t, s = x[:4], x[4:7], x[7]
        m = quad_monomials(q)
        out = np.empty(self.n_eqs)
        out[:-1] = self._coefficients(t, s) @ m
        out[-1] = q @ q - 1.0
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate_with_jacobian(x)[1]

    def evaluate_with_jacobian(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q, t, s = x[:4], x[4:7], x[7]
        m = quad_monomials(q)
        jm = quad_monomials_jac(q)
        coeff = self._coefficients(t, s)
        res = np.empty(self.n_eqs)
        res[:-1] = coeff @ m
        res[-1] = q @ q - 1.0
        jac = np.zeros((self.n_eqs, 8))
        jac[:-1, :4] = coeff @ jm
        jac[:-1, 4:7] = np.einsum("nka,k->na", self._a, m)
        jac[:-1, 7] = -self._b @ m
        jac[-1, :4] = 2.0 * q
        return res, jac


def grps_system(corrs: Sequence[Correspondence2D2D]) -> GrpsSystem:
    return GrpsSystem(corrs)


class GrpsHomotopy:
    """Straight-line homotopy specialized to the stacked incidence system.

    Start and target problems share ray origins and second-view bearings
    and the constraint coefficients are linear in the first-view bearings,
    so blending the two systems equals evaluating with blended coefficient
    tensors; the t-derivative uses the tensor differences (norm row zero).
    """

    def __init__(self, start: GrpsSystem, target: GrpsSystem):
        if start.n_eqs != target.n_eqs:
            raise ValueError("start and target systems must have identical shape")
        self.start = start
        self.target = target
        self.n_vars = 8
        self.n_eqs = start.n_eqs
        self._da = target._a - start._a
        self._db = target._b - start._b
        self._dc = target._c - start._c

    def _blended(self, t: float):
        s = self.start
        return s._a + t * self._da, s._b + t * self._db, s._c + t * self._dc

    def evaluate(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.evaluate_full(x, t)[0]

    def jacobian(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.evaluate_full(x, t)[1]

    def t_derivative(self, x: np.ndarray) -> np.ndarray:
        q, tvec, s = x[:4], x[4:7], x[7]
        m = quad_monomials(q)
        out = np.empty(self.n_eqs)
        out[:-1] = (self._da @ tvec - s * self._db + self._dc) @ m
        out[-1] = 0.0
        return out

    def evaluate_full(self, x: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        q, tvec, s = x[:4], x[4:7], x[7]
        m = quad_monomials(q)
        jm = quad_monomials_jac(q)
        a_t, b_t, c_t = self._blended(t)
        coeff = a_t @ tvec - s * b_t + c_t
        res = np.empty(self.n_eqs)
        res[:-1] = coeff @ m
        res[-1] = q @ q - 1.0
        jac = np.zeros((self.n_eqs, 8))
        jac[:-1, :4] = coeff @ jm
        jac[:-1, 4:7] = np.einsum("nka,k->na", a_t, m)
        jac[:-1, 7] = -b_t @ m
        jac[-1, :4] = 2.0 * q
        dh_dt = np.empty(self.n_eqs)
        dh_dt[:-1] = (self._da @ tvec - s * self._db + self._dc) @ m
        dh_dt[-1] = 0.0
        return res, jac, dh_dt


def _recover_depths_batch(
    f: np.ndarray, v: np.ndarray, fp: np.ndarray, vp: np.ndarray,
    rot: np.ndarray, t: np.ndarray, s: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized least-squares depths for [f, -R f'] d = s R v' + t - v.

    Both bearings are unit, so the 2x2 normal matrix is [[1, -d], [-d, 1]]
    with d = f . R f'; its conditioning measures how parallel the rays are.
    Returns (alpha, alpha_prime, condition numbers).
    """
    rfp = fp @ rot.T
    rhs = s * (vp @ rot.T) + t[None, :] - v
    d = np.einsum("na,na->n", f, rfp)
    det = 1.0 - d * d
    cond = np.sqrt((1.0 + np.abs(d)) / np.maximum(1.0 - np.abs(d), 1e-300))
    b1 = np.einsum("na,na->n", f, rhs)
    b2 = -np.einsum("na,na->n", rfp, rhs)
    safe_det = np.where(det <= 0.0, 1.0, det)
    alpha = (b1 + d * b2) / safe_det
    alpha_p = (d * b1 + b2) / safe_det
    return alpha, alpha_p, cond


def recover_depths(c: Correspondence2D2D, q, t: np.ndarray, s: float) -> tuple[float, float]:
    """Least-squares depths of one correspondence at a pose."""
    rot = quat_to_rotmat(q)
    t = np.asarray(t, dtype=float)
    alpha, alpha_p, cond = _recover_depths_batch(
        c.f[None, :], c.v[None, :], c.f_prime[None, :], c.v_prime[None, :], rot, t, float(s)
    )
    if cond[0] > _DEPTH_COND_LIMIT:
        raise ValueError("ill-conditioned depth recovery")
    return float(alpha[0]), float(alpha_p[0])


def simulate(pose: Pose, corrs: Sequence[Correspondence2D2D]) -> list[Correspondence2D2D]:
    """Replace view-1 bearings by pose-consistent reprojections.

    Depths are recovered by least squares, the second ray's point is mapped
    through the similarity, and the new bearing is the ray from the view-1
    origin to it divided by the recovered view-1 depth, then normalized.
    Dividing by the signed depth keeps the simulated bearing aligned with
    the measured one even when the pose puts the point behind the ray
    origin; the incidence constraint is linear in the bearing, so the sign
    flip preserves exact consistency while avoiding mid-path coefficient
    cancellation during continuation.
    """
    f, v, fp, vp = _stack(corrs)
    rot = pose.rotation_matrix()
    alpha, alpha_p, cond = _recover_depths_batch(f, v, fp, vp, rot, pose.t, pose.s)
    if np.any(cond > _DEPTH_COND_LIMIT):
        raise ValueError("ill-conditioned depth recovery")
    points = (alpha_p[:, None] * fp + pose.s * vp) @ rot.T + pose.t[None, :]
    rays = points - v
    norms = np.linalg.norm(rays, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("zero-length reprojected ray")
    bearings = rays / np.where(alpha < 0.0, -norms, norms)[:, None]
    return [
        Correspondence2D2D(bearings[i], c.v, c.f_prime, c.v_prime)
        for i, c in enumerate(corrs)
    ]


def default_config() -> TrackerConfig:
    return TrackerConfig(step_size=0.05, max_newton_iters=5)


def _track(homotopy: GrpsHomotopy, x0: np.ndarray, config: TrackerConfig) -> TrackResult:
    """Track through the compiled kernel when available, else generically."""
    from . import _fast

    if _fast.AVAILABLE:
        start, target = homotopy.start, homotopy.target
        code, x, residual, steps = _fast.track_grps(
            start._a, start._b, start._c,
            target._a, target._b, target._c,
            np.asarray(x0, dtype=float),
            config.step_size,
            config.max_newton_iters,
            config.newton_tol,
            config.divergence_radius,
            config.singular_tol,
        )
        return TrackResult(_fast.STATUS_CODES[code], x, residual, steps)
    return track_path(homotopy, x0, config)


@dataclass(frozen=True)
class GrpsSolveResult:
    pose: Pose
    track: TrackResult
    scale_feasible: bool


def pack_unknowns(pose: Pose) -> np.ndarray:
    return np.concatenate([pose.q.as_array(), pose.t, [pose.s]])


def solve(
    corrs: Sequence[Correspondence2D2D],
    initializer: Callable[[Sequence[Correspondence2D2D]], "object"],
    config: TrackerConfig | None = None,
) -> GrpsSolveResult:
    """End-to-end generalized relative pose and scale solve.

    The initializer's pose seeds both the start problem (via reprojection)
    and the tracked unknowns.  The returned quaternion is renormalized to
    canonical sign; a non-positive tracked scale is kept but flagged
    infeasible.
    """
    if len(corrs) not in (7, 8):
        raise ValueError("7 or 8 correspondences required")
    config = config or default_config()
    init = initializer(corrs)
    start_corrs = simulate(init.pose, corrs)
    start_system = grps_system(start_corrs)
    target_system = grps_system(corrs)
    x0 = pack_unknowns(init.pose)
    track = _track(GrpsHomotopy(start_system, target_system), x0, config)
    x = track.x_final
    failed = track.status in (TrackStatus.DIVERGED, TrackStatus.SINGULAR_JACOBIAN)
    if failed or np.linalg.norm(x[:4]) < 1e-12 or not np.all(np.isfinite(x)):
        pose = init.pose
    else:
        pose = Pose(Quaternion.from_array(x[:4]), x[4:7], float(x[7]))
    return GrpsSolveResult(pose, track, scale_feasible=pose.s > 0.0)
