"""Compiled path-tracking kernels for the two pose problems.

These mirror :mod:`gcpose.tracker` step for step (RK4 predictor,
Gauss-Newton corrector with least-squares solves and the same tolerances,
clipped final step, terminal polish) but run as compiled code, which takes
a single solve from tens of milliseconds of interpreter overhead down to
well under a millisecond.  The generic tracker remains the reference
implementation; the test suite checks the two paths agree.

When numba is unavailable the solvers silently fall back to the generic
tracker; set AVAILABLE = False to force that for testing.
"""

from __future__ import annotations

import numpy as np

from .geometry import QUAD_MONOMIAL_PAIRS
from .tracker import TrackStatus

try:
    from numba import njit

    AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


STATUS_CODES = {
    0: TrackStatus.CONVERGED,
    1: TrackStatus.DIVERGED,
    2: TrackStatus.SINGULAR_JACOBIAN,
    4: TrackStatus.NO_CONVERGENCE,
}

_PAIR_A = np.array([a for a, _ in QUAD_MONOMIAL_PAIRS], dtype=np.int64)
_PAIR_B = np.array([b for _, b in QUAD_MONOMIAL_PAIRS], dtype=np.int64)
_PAIR_INDEX = np.zeros((4, 4), dtype=np.int64)
for _k in range(10):
    _PAIR_INDEX[_PAIR_A[_k], _PAIR_B[_k]] = _k
    _PAIR_INDEX[_PAIR_B[_k], _PAIR_A[_k]] = _k

_STEP_FLOOR = 1e-14


@njit(cache=True)
def _monomials(q):
    s = np.empty(11)
    jst = np.zeros((4, 11))
    for k in range(10):
        a = _PAIR_A[k]
        b = _PAIR_B[k]
        s[k] = q[a] * q[b]
        jst[a, k] += q[b]
        jst[b, k] += q[a]
    s[10] = 1.0
    return s, jst


@njit(cache=True)
def _upnp_eval(m_start, m_delta, x, t, want_dt):
    """(H, J_H, dH/dt) of the blended optimality system at (x, t)."""
    s, jst = _monomials(x)
    m_t = m_start + t * m_delta
    u = m_t @ s
    res = np.empty(5)
    res[:4] = jst @ u
    res[4] = x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3] - 1.0
    jac = np.empty((5, 4))
    jac[:4, :] = jst @ (m_t @ jst.T)
    for i in range(4):
        for j in range(4):
            scale = 2.0 if i == j else 1.0
            jac[i, j] += scale * u[_PAIR_INDEX[i, j]]
        jac[4, i] = 2.0 * x[i]
    dh_dt = np.zeros(5)
    if want_dt:
        du = m_delta @ s
        dh_dt[:4] = jst @ du
    return res, jac, dh_dt


@njit(cache=True)
def _grps_eval(a_s, b_s, c_s, da, db, dc, x, t, want_dt):
    """(H, J_H, dH/dt) of the blended incidence system at (x, t)."""
    n = a_s.shape[0]
    q = x[:4]
    tvec = x[4:7]
    scale = x[7]
    m = np.empty(10)
    jmt = np.zeros((4, 10))
    for k in range(10):
        a = _PAIR_A[k]
        b = _PAIR_B[k]
        m[k] = q[a] * q[b]
        jmt[a, k] += q[b]
        jmt[b, k] += q[a]
    res = np.empty(n + 1)
    jac = np.zeros((n + 1, 8))
    dh_dt = np.zeros(n + 1)
    for i in range(n):
        r = 0.0
        dr = 0.0
        for k in range(10):
            coeff = (
                (a_s[i, k, 0] + t * da[i, k, 0]) * tvec[0]
                + (a_s[i, k, 1] + t * da[i, k, 1]) * tvec[1]
                + (a_s[i, k, 2] + t * da[i, k, 2]) * tvec[2]
                - scale * (b_s[i, k] + t * db[i, k])
                + (c_s[i, k] + t * dc[i, k])
            )
            r += coeff * m[k]
            for j in range(4):
                jac[i, j] += coeff * jmt[j, k]
            for a in range(3):
                jac[i, 4 + a] += (a_s[i, k, a] + t * da[i, k, a]) * m[k]
            jac[i, 7] -= (b_s[i, k] + t * db[i, k]) * m[k]
            if want_dt:
                dcoeff = (
                    da[i, k, 0] * tvec[0]
                    + da[i, k, 1] * tvec[1]
                    + da[i, k, 2] * tvec[2]
                    - scale * db[i, k]
                    + dc[i, k]
                )
                dr += dcoeff * m[k]
        res[i] = r
        dh_dt[i] = dr
    res[n] = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3] - 1.0
    for j in range(4):
        jac[n, j] = 2.0 * q[j]
    return res, jac, dh_dt


@njit(cache=True)
def _lstsq(jac, rhs, singular_tol):
    """Least-squares solve guarded by the smallest singular value.

    Returns (ok, solution); ok is False on rank deficiency.
    """
    sol, _, _, svals = np.linalg.lstsq(jac, rhs, -1.0)
    if svals[svals.shape[0] - 1] < singular_tol:
        return False, sol
    return True, sol


@njit(cache=True)
def _norm(v):
    acc = 0.0
    for i in range(v.shape[0]):
        acc += v[i] * v[i]
    return np.sqrt(acc)


@njit(cache=True)
def _upnp_velocity(m_start, m_delta, x, t, singular_tol):
    _, jac, dh = _upnp_eval(m_start, m_delta, x, t, True)
    ok, vel = _lstsq(jac, dh, singular_tol)
    return ok, -vel


@njit(cache=True)
def _track_kernel_upnp(m_start, m_delta, x0, step_size, max_newton, newton_tol,
                       divergence_radius, singular_tol):
    x = x0.copy()
    steps = 0
    # initial snap onto the start root if needed
    res, jac, _ = _upnp_eval(m_start, m_delta, x, 0.0, False)
    if _norm(res) > 10.0 * newton_tol:
        for _ in range(max_newton):
            if _norm(res) <= newton_tol:
                break
            ok, step = _lstsq(jac, res, singular_tol)
            if not ok:
                return 2, x, _norm(res), steps
            x = x - step
            res, jac, _ = _upnp_eval(m_start, m_delta, x, 0.0, False)
            if _norm(step) <= _STEP_FLOOR * (1.0 + _norm(x)):
                break
    t = 0.0
    while t < 1.0:
        dt = min(step_size, 1.0 - t)
        # RK4 predictor on dx/dt = -J^+ dH/dt
        ok1, k1 = _upnp_velocity(m_start, m_delta, x, t, singular_tol)
        ok2, k2 = _upnp_velocity(m_start, m_delta, x + 0.5 * dt * k1, t + 0.5 * dt, singular_tol)
        ok3, k3 = _upnp_velocity(m_start, m_delta, x + 0.5 * dt * k2, t + 0.5 * dt, singular_tol)
        ok4, k4 = _upnp_velocity(m_start, m_delta, x + dt * k3, t + dt, singular_tol)
        if not (ok1 and ok2 and ok3 and ok4):
            r_now = _upnp_eval(m_start, m_delta, x, 1.0, False)[0]
            return 2, x, _norm(r_now), steps
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if _norm(x) > divergence_radius:
            return 1, x, np.inf, steps
        t = 1.0 if t + dt >= 1.0 - 1e-12 else t + dt
        # Gauss-Newton corrector at the new t
        res, jac, _ = _upnp_eval(m_start, m_delta, x, t, False)
        for _ in range(max_newton):
            if _norm(res) <= newton_tol:
                break
            ok, step = _lstsq(jac, res, singular_tol)
            if not ok:
                r_now = _upnp_eval(m_start, m_delta, x, 1.0, False)[0]
                return 2, x, _norm(r_now), steps
            x = x - step
            res, jac, _ = _upnp_eval(m_start, m_delta, x, t, False)
            if _norm(step) <= _STEP_FLOOR * (1.0 + _norm(x)):
                break
        steps += 1
        if _norm(x) > divergence_radius:
            return 1, x, np.inf, steps
    # terminal polish at t = 1
    res, jac, _ = _upnp_eval(m_start, m_delta, x, 1.0, False)
    for _ in range(3 * max_newton):
        if _norm(res) <= newton_tol:
            break
        ok, step = _lstsq(jac, res, singular_tol)
        if not ok:
            return 2, x, _norm(res), steps
        x = x - step
        res, jac, _ = _upnp_eval(m_start, m_delta, x, 1.0, False)
        if _norm(step) <= _STEP_FLOOR * (1.0 + _norm(x)):
            break
    final = _norm(res)
    if final <= newton_tol * max(1.0, _norm(x)):
        return 0, x, final, steps
    return 4, x, final, steps


@njit(cache=True)
def _grps_velocity(a_s, b_s, c_s, da, db, dc, x, t, singular_tol):
    _, jac, dh = _grps_eval(a_s, b_s, c_s, da, db, dc, x, t, True)
    ok, vel = _lstsq(jac, dh, singular_tol)
    return ok, -vel


@njit(cache=True)
def _track_kernel_grps(a_s, b_s, c_s, a_t, b_t, c_t, x0, step_size, max_newton,
                       newton_tol, divergence_radius, singular_tol):
    da = a_t - a_s
    db = b_t - b_s
    dc = c_t - c_s
    x = x0.copy()
    steps = 0
    res, jac, _ = _grps_eval(a_s, b_s, c_s, da, db, dc, x, 0.0, False)
    if _norm(res) > 10.0 * newton_tol:
        for _ in range(max_newton):
            if _norm(res) <= newton_tol:
                break
            ok, step = _lstsq(jac, res, singular_tol)
            if not ok:
                return 2, x, _norm(res), steps
            x = x - step
            res, jac, _ = _grps_eval(a_s, b_s, c_s, da, db, dc, x, 0.0, False)
            if _norm(step) <= _STEP_FLOOR * (1.0 + _norm(x)):
                break
    t = 0.0
    while t < 1.0:
        dt = min(step_size, 1.0 - t)
        ok1, k1 = _grps_velocity(a_s, b_s, c_s, da, db, dc, x, t, singular_tol)
        ok2, k2 = _grps_velocity(a_s, b_s, c_s, da, db, dc, x + 0.5 * dt * k1, t + 0.5 * dt, singular_tol)
        ok3, k3 = _grps_velocity(a_s, b_s, c_s, da, db, dc, x + 0.5 * dt * k2, t + 0.5 * dt, singular_tol)
        ok4, k4 = _grps_velocity(a_s, b_s, c_s, da, db, dc, x + dt * k3, t + dt, singular_tol)
        if not (ok1 and ok2 and ok3 and ok4):
            r_now = _grps_eval(a_s, b_s, c_s, da, db, dc, x, 1.0, False)[0]
            return 2, x, _norm(r_now), steps
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if _norm(x) > divergence_radius:
            return 1, x, np.inf, steps
        t = 1.0 if t + dt >= 1.0 - 1e-12 else t + dt
        res, jac, _ = _grps_eval(a_s, b_s, c_s, da, db, dc, x, t, False)
        for _ in range(max_newton):
            if _norm(res) <= newton_tol:
                break
            ok, step = _lstsq(jac, res, singular_tol)
            if not ok:
                r_now = _grps_eval(a_s, b_s, c_s, da, db, dc, x, 1.0, False)[0]
                return 2, x, _norm(r_now), steps
            x = x - step
            res, jac, _ = _grps_eval(a_s, b_s, c_s, da, db, dc, x, t, False)
            if _norm(step) <= _STEP_FLOOR * (1.0 + _norm(x)):
                break
        steps += 1
        if _norm(x) > divergence_radius:
            return 1, x, np.inf, steps
    res, jac, _ = _grps_eval(a_s, b_s, c_s, da, db, dc, x, 1.0, False)
    for _ in range(3 * max_newton):
        if _norm(res) <= newton_tol:
            break
        ok, step = _lstsq(jac, res, singular_tol)
        if not ok:
            return 2, x, _norm(res), steps
        x = x - step
        res, jac, _ = _grps_eval(a_s, b_s, c_s, da, db, dc, x, 1.0, False)
        if _norm(step) <= _STEP_FLOOR * (1.0 + _norm(x)):
            break
    final = _norm(res)
    if final <= newton_tol * max(1.0, _norm(x)):
        return 0, x, final, steps
    return 4, x, final, steps


def track_upnp(m_start, m_delta, x0, step_size, max_newton, newton_tol,
               divergence_radius, singular_tol):
    return _track_kernel_upnp(
        m_start, m_delta, x0, step_size, max_newton, newton_tol,
        divergence_radius, singular_tol,
    )


def track_grps(a_s, b_s, c_s, a_t, b_t, c_t, x0, step_size, max_newton,
               newton_tol, divergence_radius, singular_tol):
    return _track_kernel_grps(
        a_s, b_s, c_s, a_t, b_t, c_t, x0, step_size, max_newton,
        newton_tol, divergence_radius, singular_tol,
    )
