"""Rotation representations, cross-product helpers, and pose error metrics.

Conventions
-----------
- Quaternions are scalar-first ``(q0, q1, q2, q3)``, normalized on
  construction, with the sign fixed so the first nonzero component is
  positive (``q`` and ``-q`` encode the same rotation; the canonical sign
  makes comparisons deterministic).
- Rotation matrices are 3x3 proper rotations acting on column vectors.
- The 6D rotation representation is the first two columns of a rotation
  matrix before orthonormalization; Gram-Schmidt recovers the full matrix.
- Angles in degrees at the API surface, radians internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Ordering of the ten quadratic quaternion monomials shared by the pose
# solvers: (q0^2, q0q1, q0q2, q0q3, q1^2, q1q2, q1q3, q2^2, q2q3, q3^2).
QUAD_MONOMIAL_PAIRS: tuple[tuple[int, int], ...] = (
    (0, 0), (0, 1), (0, 2), (0, 3),
    (1, 1), (1, 2), (1, 3),
    (2, 2), (2, 3),
    (3, 3),
)


def _build_rotation_monomial_basis() -> np.ndarray:
    """Constant matrices B_k with R(q) = sum_k m_k(q) B_k for unit q."""
    basis = np.zeros((10, 3, 3))
    basis[0] = np.eye(3)                                      # q0^2
    basis[1] = [[0, 0, 0], [0, 0, -2], [0, 2, 0]]             # q0*q1
    basis[2] = [[0, 0, 2], [0, 0, 0], [-2, 0, 0]]             # q0*q2
    basis[3] = [[0, -2, 0], [2, 0, 0], [0, 0, 0]]             # q0*q3
    basis[4] = np.diag([1.0, -1.0, -1.0])                     # q1^2
    basis[5] = [[0, 2, 0], [2, 0, 0], [0, 0, 0]]              # q1*q2
    basis[6] = [[0, 0, 2], [0, 0, 0], [2, 0, 0]]              # q1*q3
    basis[7] = np.diag([-1.0, 1.0, -1.0])                     # q2^2
    basis[8] = [[0, 0, 0], [0, 0, 2], [0, 2, 0]]              # q2*q3
    basis[9] = np.diag([-1.0, -1.0, 1.0])                     # q3^2
    return basis


# R(q) as a linear map from quadratic monomials to matrix entries.  The pose
# solvers use this to keep their constraint systems polynomial in q.
ROTATION_MONOMIAL_BASIS = _build_rotation_monomial_basis()
ROTATION_MONOMIAL_BASIS.setflags(write=False)


_PAIR_A = np.array([a for a, _ in QUAD_MONOMIAL_PAIRS])
_PAIR_B = np.array([b for _, b in QUAD_MONOMIAL_PAIRS])
_ONEHOT_A = np.zeros((10, 4))
_ONEHOT_A[np.arange(10), _PAIR_A] = 1.0
_ONEHOT_B = np.zeros((10, 4))
_ONEHOT_B[np.arange(10), _PAIR_B] = 1.0

# PAIR_INDEX[i, j] is the monomial index of q_i q_j; the Hessian of the
# monomial vector contracted with any u reduces to a gather through it.
PAIR_INDEX = np.zeros((4, 4), dtype=np.intp)
for _k, (_a, _b) in enumerate(QUAD_MONOMIAL_PAIRS):
    PAIR_INDEX[_a, _b] = _k
    PAIR_INDEX[_b, _a] = _k
PAIR_HESS_SCALE = np.ones((4, 4)) + np.eye(4)


def quad_monomials(q: np.ndarray) -> np.ndarray:
    """The ten quadratic monomials of a 4-vector, in the shared ordering."""
    q = np.asarray(q, dtype=float)
    return q[_PAIR_A] * q[_PAIR_B]


def quad_monomials_jac(q: np.ndarray) -> np.ndarray:
    """10x4 Jacobian of :func:`quad_monomials` with respect to q."""
    q = np.asarray(q, dtype=float)
    return _ONEHOT_A * q[_PAIR_B, None] + _ONEHOT_B * q[_PAIR_A, None]


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion, scalar first, canonical sign (first nonzero > 0)."""

    q0: float
    q1: float
    q2: float
    q3: float

    def __post_init__(self):
        comps = (float(self.q0), float(self.q1), float(self.q2), float(self.q3))
        norm = math.sqrt(sum(c * c for c in comps))
        if norm < 1e-12 or not math.isfinite(norm):
            raise ValueError("degenerate quaternion")
        sign = 1.0
        for c in comps:
            if c != 0.0:
                sign = 1.0 if c > 0.0 else -1.0
                break
        scale = sign / norm
        names = ("q0", "q1", "q2", "q3")
        for name, c in zip(names, comps):
            object.__setattr__(self, name, c * scale)

    @classmethod
    def from_array(cls, q: np.ndarray) -> "Quaternion":
        q = np.asarray(q, dtype=float).reshape(4)
        return cls(q[0], q[1], q[2], q[3])

    @classmethod
    def from_axis_angle(cls, axis: np.ndarray, angle_rad: float) -> "Quaternion":
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n < 1e-12:
            raise ValueError("degenerate rotation axis")
        axis = axis / n
        half = 0.5 * angle_rad
        s = math.sin(half)
        return cls(math.cos(half), s * axis[0], s * axis[1], s * axis[2])

    def as_array(self) -> np.ndarray:
        return np.array([self.q0, self.q1, self.q2, self.q3])

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_rotmat(self.as_array())


@dataclass(frozen=True)
class Rotation6D:
    """First two columns of a rotation matrix, before orthonormalization."""

    a1: np.ndarray
    a2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a1", np.asarray(self.a1, dtype=float).reshape(3).copy())
        object.__setattr__(self, "a2", np.asarray(self.a2, dtype=float).reshape(3).copy())


@dataclass(frozen=True)
class Pose:
    """Rigid pose with scale: rotation (unit quaternion), translation, s.

    Accepted solutions require s > 0; solvers may hand back poses with a
    non-positive tracked scale together with an infeasibility flag, so the
    constructor does not reject them.
    """

    q: Quaternion
    t: np.ndarray
    s: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(3).copy()
        if not np.all(np.isfinite(t)) or not math.isfinite(float(self.s)):
            raise ValueError("non-finite pose components")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "s", float(self.s))

    def rotation_matrix(self) -> np.ndarray:
        return self.q.rotation_matrix()


def quat_to_rotmat(q) -> np.ndarray:
    """Rotation matrix of a quaternion (normalized internally).

    Bilinear in the normalized entries, so q and -q map to the same matrix
    exactly.
    """
    if isinstance(q, Quaternion):
        q = q.as_array()
    q = np.asarray(q, dtype=float).reshape(4)
    nsq = float(q @ q)
    if nsq < 1e-24:
        raise ValueError("degenerate quaternion")
    m = quad_monomials(q / math.sqrt(nsq))
    return np.einsum("k,kab->ab", m, ROTATION_MONOMIAL_BASIS)


def rotmat_to_quat(rot: np.ndarray) -> Quaternion:
    """Quaternion of a proper rotation matrix (Shepperd's branch method)."""
    rot = np.asarray(rot, dtype=float)
    tr = rot[0, 0] + rot[1, 1] + rot[2, 2]
    if tr > 0.0:
        w = math.sqrt(1.0 + tr) / 2.0
        s = 4.0 * w
        return Quaternion(
            w,
            (rot[2, 1] - rot[1, 2]) / s,
            (rot[0, 2] - rot[2, 0]) / s,
            (rot[1, 0] - rot[0, 1]) / s,
        )
    i = int(np.argmax([rot[0, 0], rot[1, 1], rot[2, 2]]))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = 2.0 * math.sqrt(max(1.0 + rot[i, i] - rot[j, j] - rot[k, k], 0.0))
    xyz = np.empty(3)
    xyz[i] = s / 4.0
    xyz[j] = (rot[j, i] + rot[i, j]) / s
    xyz[k] = (rot[k, i] + rot[i, k]) / s
    w = (rot[k, j] - rot[j, k]) / s
    return Quaternion(w, xyz[0], xyz[1], xyz[2])


def sixd_to_rotmat(r6: Rotation6D) -> np.ndarray:
    """Gram-Schmidt a 6D representation into a proper rotation matrix.

    b1 = a1/|a1|, b2 = normalize(a2 - (b1.a2) b1), b3 = b1 x b2; the result
    is invariant to positive scaling of a1 and to adding multiples of a1
    to a2.
    """
    n1 = np.linalg.norm(r6.a1)
    if n1 < 1e-12:
        raise ValueError("degenerate 6D input")
    b1 = r6.a1 / n1
    a2_perp = r6.a2 - (b1 @ r6.a2) * b1
    n2 = np.linalg.norm(a2_perp)
    if n2 < 1e-12:
        raise ValueError("degenerate 6D input")
    b2 = a2_perp / n2
    b3 = np.cross(b1, b2)
    return np.column_stack([b1, b2, b3])


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix with skew(v) @ w == cross(v, w)."""
    v = np.asarray(v, dtype=float).reshape(3)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rotation_error_deg(r_hat: np.ndarray, r_gt: np.ndarray) -> float:
    """Geodesic rotation error in degrees via the Frobenius-norm identity.

    2*arcsin(|R_hat - R_gt|_F / (2*sqrt(2))) equals the geodesic angle; the
    arcsin argument is clamped to [-1, 1] to guard roundoff near 0 and 180
    degrees.
    """
    diff = np.asarray(r_hat, dtype=float) - np.asarray(r_gt, dtype=float)
    arg = np.linalg.norm(diff) / (2.0 * math.sqrt(2.0))
    arg = min(max(arg, -1.0), 1.0)
    return math.degrees(2.0 * math.asin(arg))


def translation_error_pct(t_hat: np.ndarray, t_gt: np.ndarray) -> float:
    """Relative translation error |t_hat - t_gt| / |t_gt| in percent."""
    t_gt = np.asarray(t_gt, dtype=float)
    denom = np.linalg.norm(t_gt)
    if denom <= 0.0:
        raise ValueError("undefined relative error")
    return float(np.linalg.norm(np.asarray(t_hat, dtype=float) - t_gt) / denom * 100.0)


def scale_error_pct(s_hat: float, s_gt: float) -> float:
    """Relative scale error |s_hat - s_gt| / s_gt in percent."""
    if s_gt <= 0.0:
        raise ValueError("undefined relative error")
    return abs(float(s_hat) - float(s_gt)) / float(s_gt) * 100.0


def translation_angle_deg(t_hat: np.ndarray, t_gt: np.ndarray) -> float:
    """Angle between translation directions in degrees (reporting metric for
    scenes where the translation magnitude is unobservable)."""
    a = np.asarray(t_hat, dtype=float)
    b = np.asarray(t_gt, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-15 or nb < 1e-15:
        raise ValueError("undefined relative error")
    c = float(a @ b / (na * nb))
    return math.degrees(math.acos(min(max(c, -1.0), 1.0)))
