import math

import numpy as np
import pytest

from gcpose.geometry import (
    Pose,
    Quaternion,
    Rotation6D,
    quat_to_rotmat,
    rotation_error_deg,
    rotmat_to_quat,
    scale_error_pct,
    sixd_to_rotmat,
    skew,
    translation_angle_deg,
    translation_error_pct,
)


def rodrigues(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = skew(axis)
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


class TestQuatToRotmat:
    def test_identity(self):
        assert np.allclose(quat_to_rotmat([1, 0, 0, 0]), np.eye(3))

    def test_pi_about_x(self):
        assert np.allclose(quat_to_rotmat([0, 1, 0, 0]), np.diag([1.0, -1.0, -1.0]))

    def test_matches_rodrigues(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(-math.pi, math.pi)
            q = np.concatenate([[math.cos(angle / 2)], math.sin(angle / 2) * axis])
            assert np.abs(quat_to_rotmat(q) - rodrigues(axis, angle)).max() < 1e-12

    def test_sign_symmetry_exact(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            q = rng.standard_normal(4)
            assert np.array_equal(quat_to_rotmat(q), quat_to_rotmat(-q))

    def test_determinant_one(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            q = rng.standard_normal(4)
            assert abs(np.linalg.det(quat_to_rotmat(q)) - 1.0) < 1e-12

    def test_zero_quaternion_rejected(self):
        with pytest.raises(ValueError, match="degenerate quaternion"):
            quat_to_rotmat([0.0, 0.0, 0.0, 0.0])


class TestQuaternionType:
    def test_normalized_and_canonical(self):
        q = Quaternion(-2.0, 0.0, 0.0, 2.0)
        assert q.q0 == pytest.approx(math.sqrt(0.5))
        assert abs(np.linalg.norm(q.as_array()) - 1.0) < 1e-9

    def test_first_nonzero_positive(self):
        q = Quaternion(0.0, -1.0, 0.0, 0.0)
        assert q.q1 == 1.0

    def test_zero_rejected(self):
        with pytest.raises(ValueError, match="degenerate quaternion"):
            Quaternion(0.0, 0.0, 0.0, 0.0)

    def test_rotmat_round_trip(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            q = Quaternion.from_array(rng.standard_normal(4))
            q2 = rotmat_to_quat(q.rotation_matrix())
            assert np.abs(q.as_array() - q2.as_array()).max() < 1e-12


class TestSixd:
    def test_identity(self):
        r = sixd_to_rotmat(Rotation6D([1, 0, 0], [0, 1, 0]))
        assert np.allclose(r, np.eye(3))

    def test_scale_and_shear_removed(self):
        r = sixd_to_rotmat(Rotation6D([3, 0, 0], [0.5, 2, 0]))
        assert np.allclose(r, np.eye(3), atol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            rot = quat_to_rotmat(rng.standard_normal(4))
            rec = sixd_to_rotmat(Rotation6D(rot[:, 0], rot[:, 1]))
            assert np.abs(rec - rot).max() < 1e-12

    def test_proper_rotation_output(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            r6 = Rotation6D(rng.standard_normal(3), rng.standard_normal(3))
            rot = sixd_to_rotmat(r6)
            assert np.abs(rot.T @ rot - np.eye(3)).max() < 1e-9
            assert np.linalg.det(rot) == pytest.approx(1.0, abs=1e-9)

    def test_positive_scale_invariance(self):
        rng = np.random.default_rng(15)
        for c in (0.5, 2.0, 117.0):
            a1 = rng.standard_normal(3)
            a2 = rng.standard_normal(3)
            r1 = sixd_to_rotmat(Rotation6D(a1, a2))
            r2 = sixd_to_rotmat(Rotation6D(c * a1, a2))
            assert np.abs(r1 - r2).max() < 1e-12

    def test_degenerate_inputs(self):
        with pytest.raises(ValueError, match="degenerate 6D"):
            sixd_to_rotmat(Rotation6D([0, 0, 0], [0, 1, 0]))
        with pytest.raises(ValueError, match="degenerate 6D"):
            sixd_to_rotmat(Rotation6D([1, 0, 0], [2, 0, 0]))


class TestSkew:
    def test_basis(self):
        e1, e2, e3 = np.eye(3)
        assert np.array_equal(skew(e1) @ e2, e3)

    def test_self_annihilation(self):
        v = np.array([0.3, -1.2, 2.0])
        assert np.abs(skew(v) @ v).max() < 1e-15

    def test_matches_cross(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            v, w = rng.standard_normal(3), rng.standard_normal(3)
            assert np.abs(skew(v) @ w - np.cross(v, w)).max() < 1e-15


class TestErrorMetrics:
    def test_zero_rotation_error(self):
        rot = quat_to_rotmat([0.3, 0.5, -0.2, 0.7])
        assert rotation_error_deg(rot, rot) == 0.0

    def test_two_degree_geodesic(self):
        rot = rodrigues([0, 0, 1], math.radians(2.0))
        err = rotation_error_deg(rot, np.eye(3))
        # oracle: geodesic angle from the trace formula
        oracle = math.degrees(math.acos((np.trace(rot) - 1.0) / 2.0))
        assert err == pytest.approx(2.0, abs=1e-9)
        assert err == pytest.approx(oracle, abs=1e-9)

    def test_antipodal(self):
        assert rotation_error_deg(np.diag([1.0, -1.0, -1.0]), np.eye(3)) == pytest.approx(180.0)

    def test_symmetry(self):
        rng = np.random.default_rng(19)
        a = quat_to_rotmat(rng.standard_normal(4))
        b = quat_to_rotmat(rng.standard_normal(4))
        assert rotation_error_deg(a, b) == pytest.approx(rotation_error_deg(b, a), abs=1e-12)

    def test_left_invariance(self):
        rng = np.random.default_rng(21)
        delta = rodrigues([1, 1, 1], 0.37)
        reference = rotation_error_deg(delta, np.eye(3))
        for _ in range(100):
            rot = quat_to_rotmat(rng.standard_normal(4))
            assert rotation_error_deg(rot @ delta, rot) == pytest.approx(reference, abs=1e-9)

    def test_translation_error(self):
        t = np.array([1.0, 2.0, 2.0])
        assert translation_error_pct(t, t) == 0.0
        assert translation_error_pct(1.05 * t, t) == pytest.approx(5.0, abs=1e-12)
        with pytest.raises(ValueError, match="undefined relative error"):
            translation_error_pct(t, np.zeros(3))

    def test_scale_error(self):
        assert scale_error_pct(2.0, 1.6) == pytest.approx(25.0)
        assert scale_error_pct(1.0, 1.0) == 0.0
        with pytest.raises(ValueError, match="undefined relative error"):
            scale_error_pct(1.0, 0.0)

    def test_translation_angle(self):
        assert translation_angle_deg([1, 0, 0], [0, 1, 0]) == pytest.approx(90.0)
        assert translation_angle_deg([2, 0, 0], [5, 0, 0]) == pytest.approx(0.0)


class TestPose:
    def test_fields(self):
        pose = Pose(Quaternion(1, 0, 0, 0), [1.0, 2.0, 3.0], 2.0)
        assert np.array_equal(pose.t, [1.0, 2.0, 3.0])
        assert pose.s == 2.0
        assert np.allclose(pose.rotation_matrix(), np.eye(3))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Pose(Quaternion(1, 0, 0, 0), [np.nan, 0, 0])
