import numpy as np
import pytest
from scipy import stats

from gcpose import synth
from gcpose.geometry import Pose, Quaternion, rotation_error_deg
from gcpose.initializers import (
    Head,
    InitialSolution,
    Layer,
    Provenance,
    RegressorModel,
    forward,
    grps_input_matrix,
    load_regressor,
    make_regressor_initializer,
    perturbed_oracle,
    random_init,
    regress_pose,
    save_regressor,
    upnp_input_matrix,
)


def small_model(problem_kind="upnp", seed=0, widths=(16, 16)):
    """Random but fixed tiny model for behavioral tests."""
    rng = np.random.default_rng(seed)
    c_in = 9 if problem_kind == "upnp" else 12
    head_specs = (
        [("quaternion", 4)]
        if problem_kind == "upnp"
        else [("rotation6d", 6), ("translation", 3), ("scale", 1)]
    )
    out_width = sum(w for _, w in head_specs)
    layers = []
    prev = c_in
    for w in widths:
        layers.append(
            Layer("conv1d", prev, w, 1, rng.normal(0, 0.5, (w, prev)), rng.normal(0, 0.1, w))
        )
        prev = w
    layers.append(
        Layer("fully_connected", prev, out_width, 1,
              rng.normal(0, 0.5, (out_width, prev)), rng.normal(0, 0.1, out_width))
    )
    heads = []
    start = 0
    for name, w in head_specs:
        heads.append(Head(name, start, w))
        start += w
    return RegressorModel(
        problem_kind=problem_kind,
        input_channels=c_in,
        norm_mean=np.zeros(c_in),
        norm_std=np.ones(c_in),
        layers=tuple(layers),
        heads=tuple(heads),
    )


class TestRandomInit:
    def test_deterministic(self):
        a = random_init(42, "grps")
        b = random_init(42, "grps")
        assert np.array_equal(a.pose.q.as_array(), b.pose.q.as_array())
        assert np.array_equal(a.pose.t, b.pose.t)
        assert a.pose.s == b.pose.s
        assert a.provenance is Provenance.RANDOM

    def test_quaternion_uniform_on_sphere(self):
        # canonical sign folds to the q0 >= 0 hemisphere; the eight
        # (q1, q2, q3) sign octants must be equally likely
        from gcpose.initializers import random_pose

        rng = np.random.default_rng(0)
        counts = np.zeros(8)
        n = 10_000
        for _ in range(n):
            q = random_pose(rng, "upnp").q.as_array()
            idx = (q[1] > 0) * 4 + (q[2] > 0) * 2 + (q[3] > 0) * 1
            counts[idx] += 1
        assert stats.chisquare(counts).pvalue > 0.01

    def test_scale_range(self):
        for seed in range(200):
            s = random_init(seed, "grps").pose.s
            assert 0.1 <= s <= 5.0
        assert random_init(0, "upnp").pose.s == 1.0


class TestPerturbedOracle:
    def gt(self):
        return Pose(Quaternion(0.9, 0.1, -0.3, 0.2), np.array([0.5, -1.0, 2.0]), 1.7)

    def test_zero_magnitudes_identity(self):
        sol = perturbed_oracle(self.gt(), 0, 0, 0, seed=3)
        assert np.array_equal(sol.pose.q.as_array(), self.gt().q.as_array())
        assert np.array_equal(sol.pose.t, self.gt().t)
        assert sol.pose.s == self.gt().s

    def test_exact_rotation_magnitude(self):
        gt = self.gt()
        for seed in range(50):
            sol = perturbed_oracle(gt, 7.0, 0, 0, seed=seed)
            err = rotation_error_deg(sol.pose.rotation_matrix(), gt.rotation_matrix())
            assert err == pytest.approx(7.0, abs=1e-9)

    def test_translation_bounded(self):
        gt = self.gt()
        for seed in range(50):
            sol = perturbed_oracle(gt, 0, 0.2, 0, seed=seed)
            assert np.linalg.norm(sol.pose.t - gt.t) <= 0.2 * np.linalg.norm(gt.t) + 1e-12

    def test_scale_bounded(self):
        gt = self.gt()
        for seed in range(50):
            sol = perturbed_oracle(gt, 0, 0, 0.2, seed=seed)
            assert abs(sol.pose.s - gt.s) <= 0.2 * gt.s + 1e-12

    def test_deterministic(self):
        a = perturbed_oracle(self.gt(), 5, 0.1, 0.1, seed=9)
        b = perturbed_oracle(self.gt(), 5, 0.1, 0.1, seed=9)
        assert np.array_equal(a.pose.q.as_array(), b.pose.q.as_array())
        assert np.array_equal(a.pose.t, b.pose.t)

    def test_negative_magnitude_rejected(self):
        with pytest.raises(ValueError):
            perturbed_oracle(self.gt(), -1, 0, 0, seed=0)


class TestForwardPass:
    def test_permutation_invariance(self):
        model = small_model("grps", seed=1)
        rng = np.random.default_rng(2)
        x = rng.standard_normal((11, 12))
        out = forward(model, x)
        for _ in range(10):
            perm = rng.permutation(11)
            assert np.abs(forward(model, x[perm]) - out).max() < 1e-12

    def test_deterministic(self):
        model = small_model("upnp", seed=3)
        x = np.random.default_rng(4).standard_normal((7, 9))
        assert np.array_equal(forward(model, x), forward(model, x))

    def test_shape_mismatch_rejected(self):
        model = small_model("upnp")
        with pytest.raises(ValueError, match="model/input incompatible"):
            forward(model, np.zeros((5, 12)))
        with pytest.raises(ValueError, match="model/input incompatible"):
            forward(model, np.zeros((0, 9)))

    def test_zero_weights_quaternion_rejected(self):
        model = small_model("upnp", seed=5)
        zero_layers = tuple(
            Layer(l.kind, l.in_channels, l.out_channels, 1,
                  np.zeros_like(l.weights), np.zeros_like(l.bias))
            for l in model.layers
        )
        zero_model = RegressorModel(
            model.problem_kind, model.input_channels, model.norm_mean,
            model.norm_std, zero_layers, model.heads,
        )
        with pytest.raises(ValueError, match="degenerate quaternion"):
            regress_pose(zero_model, np.ones((6, 9)))

    def test_grps_heads_decoded(self):
        model = small_model("grps", seed=6)
        sol = regress_pose(model, np.random.default_rng(7).standard_normal((9, 12)))
        assert sol.provenance is Provenance.LEARNED
        assert sol.pose.s > 0  # exp-decoded scale is always positive
        rot = sol.pose.rotation_matrix()
        assert np.abs(rot.T @ rot - np.eye(3)).max() < 1e-9


class TestWeightFile:
    def test_round_trip_identical_outputs(self, tmp_path):
        model = small_model("grps", seed=8)
        path = tmp_path / "model.json"
        save_regressor(model, path)
        loaded = load_regressor(path)
        rng = np.random.default_rng(9)
        for _ in range(10):
            x = rng.standard_normal((8, 12))
            assert np.abs(forward(model, x) - forward(loaded, x)).max() < 1e-12

    def test_unknown_format_version_rejected(self, tmp_path):
        model = small_model("upnp")
        path = tmp_path / "model.json"
        save_regressor(model, path)
        import json

        doc = json.loads(path.read_text())
        doc["format_version"] = 2
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="format_version"):
            load_regressor(path)

    def test_unreadable_rejected(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text("{not json")
        with pytest.raises(ValueError, match="unreadable"):
            load_regressor(path)

    def test_channel_mismatch_rejected(self):
        model = small_model("upnp")
        bad_layers = (model.layers[0],) + (
            Layer("conv1d", 99, 16, 1, np.zeros((16, 99)), np.zeros(16)),
        ) + model.layers[1:]
        with pytest.raises(ValueError, match="incompatible"):
            RegressorModel(
                model.problem_kind, model.input_channels, model.norm_mean,
                model.norm_std, bad_layers, model.heads,
            )

    def test_head_width_mismatch_rejected(self):
        model = small_model("upnp")
        with pytest.raises(ValueError, match="width"):
            RegressorModel(
                model.problem_kind, model.input_channels, model.norm_mean,
                model.norm_std, model.layers, (Head("quaternion", 0, 3),),
            )


class TestInputMatrices:
    def test_upnp_layout(self):
        sc = synth.gen_upnp_scene(synth.default_upnp_config(seed=0))
        x = upnp_input_matrix(sc.corrs)
        assert x.shape == (len(sc.corrs), 9)
        assert np.array_equal(x[0, :3], sc.corrs[0].p)
        assert np.array_equal(x[0, 3:6], sc.corrs[0].f)
        assert np.array_equal(x[0, 6:], sc.corrs[0].v)

    def test_grps_layout(self):
        sc = synth.gen_grps_scene(synth.default_grps_config(seed=0))
        x = grps_input_matrix(sc.corrs)
        assert x.shape == (7, 12)
        assert np.array_equal(x[2, :3], sc.corrs[2].f)
        assert np.array_equal(x[2, 9:], sc.corrs[2].v_prime)


class TestRegressorInitializer:
    def test_upnp_translation_recovered(self):
        sc = synth.gen_upnp_scene(synth.default_upnp_config(seed=1))
        init = make_regressor_initializer(small_model("upnp", seed=10))
        sol = init(sc.corrs)
        assert isinstance(sol, InitialSolution)
        # translation must be the closed-form optimum at the regressed q
        from gcpose.upnp import recover_translation_depths

        t, _ = recover_translation_depths(sol.pose.q.as_array(), sc.corrs)
        assert np.abs(sol.pose.t - t).max() < 1e-12
