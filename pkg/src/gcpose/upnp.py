"""Generalized absolute pose from 2D-3D correspondences.

Each correspondence ties a world point p to a camera ray with origin v and
unit bearing f through alpha * f + v = R p + t.  Minimizing the summed
squared object-space distances (point-to-ray) over (t, depths) in closed
form leaves a cost that is a quadratic form s(q)^T M s(q) in the eleven
second-and-zeroth-order quaternion monomials s(q).  The first-order
optimality conditions of that cost, together with the unit-norm equation,
form the five-equation polynomial system in q that the tracker follows.

The solver pipeline: an initializer provides a rough pose, the reprojection
simulator rebuilds bearings exactly consistent with it (a start problem
whose root is known), and one homotopy path is tracked from the start
quadratic form to the one assembled from the measured bearings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import (
    PAIR_HESS_SCALE,
    PAIR_INDEX,
    ROTATION_MONOMIAL_BASIS,
    Pose,
    Quaternion,
    quad_monomials,
    quad_monomials_jac,
    quat_to_rotmat,
)
from .tracker import TrackerConfig, TrackResult, TrackStatus, track_path


@dataclass(frozen=True)
class Correspondence2D3D:
    """World point p, unit bearing f, and ray origin v of one observation."""

    p: np.ndarray
    f: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("p", "f", "v"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3).copy())
        if abs(np.linalg.norm(self.f) - 1.0) > 1e-9:
            raise ValueError("bearing must be unit norm")


@dataclass(frozen=True)
class UpnpQuadratic:
    """Symmetric 11x11 coefficient matrix of the eliminated object-space cost."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (11, 11):
            raise ValueError("coefficient matrix must be 11x11")
        object.__setattr__(self, "m", m.copy())


def monomials_s(q: np.ndarray) -> np.ndarray:
    """11-vector of quadratic quaternion monomials plus the constant one."""
    return np.append(quad_monomials(q), 1.0)


def monomials_jac(q: np.ndarray) -> np.ndarray:
    """11x4 Jacobian of :func:`monomials_s` (constant row is zero)."""
    return np.vstack([quad_monomials_jac(q), np.zeros((1, 4))])


def _stack(corrs: Sequence[Correspondence2D3D]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = np.stack([c.p for c in corrs])
    f = np.stack([c.f for c in corrs])
    v = np.stack([c.v for c in corrs])
    return p, f, v


def _elimination_terms(f: np.ndarray, v: np.ndarray, p: np.ndarray):
    """Shared pieces of the depth/translation elimination.

    Returns the per-ray projectors P_i = I - f_i f_i^T, the inverse of their
    sum, and the monomial maps B_i with R(q) p_i = B_i m(q).
    """
    n = f.shape[0]
    proj = np.eye(3)[None, :, :] - f[:, :, None] * f[:, None, :]
    proj_sum = proj.sum(axis=0)
    eigvals = np.linalg.eigvalsh(proj_sum)
    if eigvals[0] < 1e-10 * n:
        raise ValueError("degenerate bearing configuration")
    proj_sum_inv = np.linalg.inv(proj_sum)
    # B[i,:,k] = basis_k @ p_i, so R(q) p_i = B_i @ quad_monomials(q).
    bmap = np.einsum("kab,nb->nak", ROTATION_MONOMIAL_BASIS, p)
    return proj, proj_sum_inv, bmap


def build_m(corrs: Sequence[Correspondence2D3D]) -> UpnpQuadratic:
    """Assemble the 11x11 quadratic form of the eliminated cost.

    For fixed rotation monomials m the optimal translation is
    t*(m) = (sum P_i)^-1 sum P_i (v_i - B_i m); substituting it back leaves
    sum |P_i (W_i s)|^2 = s^T M s with s = (m, 1) and
    W_i = [B_i - A sum_j P_j B_j | A sum_j P_j v_j - v_i].
    """
    if len(corrs) < 4:
        raise ValueError("at least 4 correspondences required")
    p, f, v = _stack(corrs)
    proj, proj_sum_inv, bmap = _elimination_terms(f, v, p)
    proj_b = np.einsum("nab,nbk->ak", proj, bmap)
    proj_v = np.einsum("nab,nb->a", proj, v)
    w_quad = bmap - (proj_sum_inv @ proj_b)[None, :, :]
    w_const = (proj_sum_inv @ proj_v)[None, :] - v
    w = np.concatenate([w_quad, w_const[:, :, None]], axis=2)
    m = np.einsum("nai,nab,nbj->ij", w, proj, w)
    m = 0.5 * (m + m.T)
    return UpnpQuadratic(m)


def _optimality_parts(m: np.ndarray, q: np.ndarray):
    """Residual and Jacobian of the four optimality equations for one M.

    The Hessian term sum_k (M s)_k d^2 s_k / dq_i dq_j reduces to a gather:
    each (i, j) touches exactly one monomial, doubled on the diagonal.
    """
    s = monomials_s(q)
    js = monomials_jac(q)
    u = m @ s
    r4 = js.T @ u
    j4 = js.T @ (m @ js) + u[PAIR_INDEX] * PAIR_HESS_SCALE
    return r4, j4


class UpnpSystem:
    """First-order optimality conditions plus the unit-norm equation.

    Five equations in the four quaternion components:
    s^T M ds/dq_i = 0 for i = 0..3 and q^T q - 1 = 0.
    """

    n_vars = 4
    n_eqs = 5

    def __init__(self, quadratic: UpnpQuadratic):
        self.quadratic = quadratic

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        q = np.asarray(x, dtype=float)
        s = monomials_s(q)
        residual = np.empty(5)
        residual[:4] = monomials_jac(q).T @ (self.quadratic.m @ s)
        residual[4] = q @ q - 1.0
        return residual

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate_with_jacobian(x)[1]

    def evaluate_with_jacobian(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q = np.asarray(x, dtype=float)
        r4, j4 = _optimality_parts(self.quadratic.m, q)
        residual = np.empty(5)
        residual[:4] = r4
        residual[4] = q @ q - 1.0
        jac = np.empty((5, 4))
        jac[:4, :] = j4
        jac[4, :] = 2.0 * q
        return residual, jac


def upnp_system(quadratic: UpnpQuadratic) -> UpnpSystem:
    return UpnpSystem(quadratic)


class UpnpHomotopy:
    """Straight-line homotopy specialized to the optimality system.

    Both endpoint systems share their structure and norm equation and
    differ only in the coefficient matrix, so the blend of the two systems
    equals the system of the blended matrix M(t) = (1 - t) M_G + t M_F and
    the t-derivative is the optimality residual of M_F - M_G (its norm-row
    component vanishes).  Same contract as the generic blend, one system
    evaluation instead of two.
    """

    def __init__(self, start: UpnpSystem, target: UpnpSystem):
        self.start = start
        self.target = target
        self.n_vars = 4
        self.n_eqs = 5
        self._m_start = start.quadratic.m
        self._m_delta = target.quadratic.m - start.quadratic.m

    def _blended(self, t: float) -> np.ndarray:
        return self._m_start + t * self._m_delta

    def evaluate(self, x: np.ndarray, t: float) -> np.ndarray:
        q = np.asarray(x, dtype=float)
        s = monomials_s(q)
        residual = np.empty(5)
        residual[:4] = monomials_jac(q).T @ (self._blended(t) @ s)
        residual[4] = q @ q - 1.0
        return residual

    def jacobian(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.evaluate_full(x, t)[1]

    def t_derivative(self, x: np.ndarray) -> np.ndarray:
        q = np.asarray(x, dtype=float)
        s = monomials_s(q)
        out = np.empty(5)
        out[:4] = monomials_jac(q).T @ (self._m_delta @ s)
        out[4] = 0.0
        return out

    def evaluate_full(self, x: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        q = np.asarray(x, dtype=float)
        s = monomials_s(q)
        js = monomials_jac(q)
        m_t = self._blended(t)
        u = m_t @ s
        residual = np.empty(5)
        residual[:4] = js.T @ u
        residual[4] = q @ q - 1.0
        jac = np.empty((5, 4))
        jac[:4, :] = js.T @ (m_t @ js) + u[PAIR_INDEX] * PAIR_HESS_SCALE
        jac[4, :] = 2.0 * q
        dh_dt = np.empty(5)
        dh_dt[:4] = js.T @ (self._m_delta @ s)
        dh_dt[4] = 0.0
        return residual, jac, dh_dt


def recover_translation_depths(
    q, corrs: Sequence[Correspondence2D3D]
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form optimal translation and per-ray depths at a rotation.

    t minimizes the summed squared point-to-ray distances at R(q); each
    depth is the projection of the transformed point onto its ray.
    """
    p, f, v = _stack(corrs)
    proj, proj_sum_inv, _ = _elimination_terms(f, v, p)
    rot = quat_to_rotmat(q)
    rp = p @ rot.T
    t = proj_sum_inv @ np.einsum("nab,nb->a", proj, v - rp)
    alphas = np.einsum("na,na->n", f, rp + t[None, :] - v)
    return t, alphas


def simulate(pose: Pose, corrs: Sequence[Correspondence2D3D]) -> list[Correspondence2D3D]:
    """Replace bearings by the reprojections of the world points under pose.

    The output correspondences are exactly consistent with the pose: it is a
    root of their optimality system with zero object-space cost.
    """
    p, _, v = _stack(corrs)
    rays = p @ pose.rotation_matrix().T + pose.t[None, :] - v
    norms = np.linalg.norm(rays, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("point coincides with ray origin")
    bearings = rays / norms[:, None]
    return [
        Correspondence2D3D(c.p, bearings[i], c.v) for i, c in enumerate(corrs)
    ]


def default_config() -> TrackerConfig:
    return TrackerConfig(step_size=0.02, max_newton_iters=5)


def _track(homotopy: UpnpHomotopy, x0: np.ndarray, config: TrackerConfig) -> TrackResult:
    """Track through the compiled kernel when available, else generically."""
    from . import _fast

    if _fast.AVAILABLE:
        code, x, residual, steps = _fast.track_upnp(
            homotopy._m_start,
            homotopy._m_delta,
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
class UpnpSolveResult:
    pose: Pose
    track: TrackResult
    depths: np.ndarray
    depths_feasible: bool


def solve(
    corrs: Sequence[Correspondence2D3D],
    initializer: Callable[[Sequence[Correspondence2D3D]], "object"],
    config: TrackerConfig | None = None,
) -> UpnpSolveResult:
    """End-to-end generalized absolute pose solve.

    The initializer supplies a rough pose; reprojection builds a start
    problem whose known root is that pose's quaternion; a single homotopy
    path is tracked to the system of the measured correspondences, and the
    translation and depths are recovered at the tracked rotation.  Depth
    positivity is reported, not enforced.
    """
    if len(corrs) < 4:
        raise ValueError("at least 4 correspondences required")
    config = config or default_config()
    init = initializer(corrs)
    start_corrs = simulate(init.pose, corrs)
    start_system = upnp_system(build_m(start_corrs))
    target_system = upnp_system(build_m(corrs))
    x0 = init.pose.q.as_array()
    homotopy = UpnpHomotopy(start_system, target_system)
    track = _track(homotopy, x0, config)
    q_final = track.x_final
    failed = track.status in (TrackStatus.DIVERGED, TrackStatus.SINGULAR_JACOBIAN)
    if failed or np.linalg.norm(q_final) < 1e-12 or not np.all(np.isfinite(q_final)):
        q_hat = init.pose.q  # best-effort answer; the status flags the failure
    else:
        q_hat = Quaternion.from_array(q_final)
    t_hat, alphas = recover_translation_depths(q_hat.as_array(), corrs)
    pose = Pose(q_hat, t_hat, 1.0)
    return UpnpSolveResult(pose, track, alphas, bool(np.all(alphas > 0)))
