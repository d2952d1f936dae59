"""Providers of the rough start pose consumed by the solvers.

Three kinds: uniform random poses, a perturbed-oracle stand-in that degrades
a ground-truth pose by controlled magnitudes (mimicking a regressor of known
accuracy), and a learned regressor executed by a built-in forward pass over
weights loaded from a portable JSON file.

Weight file format (format_version 1)
-------------------------------------
A single JSON document::

    {
      "format_version": 1,
      "problem_kind": "upnp" | "grps",
      "input_channels": 9 | 12,
      "normalization": {"mean": [...], "std": [...]},   # per input channel
      "layers": [
        {"kind": "conv1d" | "fully_connected",
         "in_channels": int, "out_channels": int, "kernel_width": 1,
         "weights": [... out*in*k, row-major out x in x k ...],
         "bias": [... out ...]},
        ...
      ],
      "heads": [{"name": "quaternion" | "rotation6d" | "translation" | "scale",
                 "start": int, "width": int}, ...]
    }

Inference semantics: inputs are rows of correspondences (N x C).  conv1d
layers have kernel width 1 over the correspondence axis (a shared per-row
affine map) and are each followed by ReLU; batch normalization is folded
into the weights at export time.  The per-row features are mean-pooled over
N, then fully_connected layers apply (ReLU between, none after the last).
Heads slice the final output: quaternion (4) is normalized, rotation6d (6)
is orthonormalized, translation (3) is used as-is, and scale (1) holds the
log of the scale (exponentiated on read, which keeps it positive).
Readers must reject any other format_version.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
import numpy as np

from .geometry import Pose, Quaternion, Rotation6D, rotmat_to_quat, sixd_to_rotmat

FORMAT_VERSION = 1
HEAD_WIDTHS = {"quaternion": 4, "rotation6d": 6, "translation": 3, "scale": 1}
INPUT_CHANNELS = {"upnp": 9, "grps": 12}


class Provenance(Enum):
    RANDOM = "random"
    PERTURBED_ORACLE = "perturbed_oracle"
    LEARNED = "learned"


@dataclass(frozen=True)
class InitialSolution:
    pose: Pose
    provenance: Provenance


def random_unit_quaternion(rng: np.random.Generator) -> Quaternion:
    """Uniform on the rotation group via a normalized 4-vector Gaussian."""
    return Quaternion.from_array(rng.standard_normal(4))


def random_pose(rng: np.random.Generator, problem_kind: str) -> Pose:
    q = random_unit_quaternion(rng)
    t = rng.uniform(-1.0, 1.0, size=3)
    s = float(rng.uniform(0.1, 5.0)) if problem_kind == "grps" else 1.0
    return Pose(q, t, s)


def random_init(rng_seed: int, problem_kind: str) -> InitialSolution:
    rng = np.random.default_rng(rng_seed)
    return InitialSolution(random_pose(rng, problem_kind), Provenance.RANDOM)


def perturbed_oracle(
    gt: Pose,
    rot_deg: float,
    trans_frac: float,
    scale_frac: float,
    seed: int,
) -> InitialSolution:
    """Ground truth degraded by controlled magnitudes.

    The rotation is composed with a random-axis rotation of exactly
    ``rot_deg`` degrees; the translation is offset along a random direction
    by at most ``trans_frac`` of its magnitude; the scale is multiplied by
    (1 + u * scale_frac) with u uniform in [-1, 1].
    """
    if rot_deg < 0 or trans_frac < 0 or scale_frac < 0:
        raise ValueError("perturbation magnitudes must be nonnegative")
    rng = np.random.default_rng(seed)
    if rot_deg > 0:
        axis = rng.standard_normal(3)
        while np.linalg.norm(axis) < 1e-9:
            axis = rng.standard_normal(3)
        delta = Quaternion.from_axis_angle(axis, math.radians(rot_deg))
        rot = gt.rotation_matrix() @ delta.rotation_matrix()
        q = rotmat_to_quat(rot)
    else:
        q = gt.q
    t = gt.t.copy()
    if trans_frac > 0:
        direction = rng.standard_normal(3)
        while np.linalg.norm(direction) < 1e-9:
            direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        t = t + direction * (trans_frac * np.linalg.norm(gt.t) * rng.uniform(0.0, 1.0))
    s = gt.s
    if scale_frac > 0:
        s = gt.s * (1.0 + rng.uniform(-1.0, 1.0) * scale_frac)
    return InitialSolution(Pose(q, t, s), Provenance.PERTURBED_ORACLE)


@dataclass(frozen=True)
class Layer:
    kind: str
    in_channels: int
    out_channels: int
    kernel_width: int
    weights: np.ndarray  # (out_channels, in_channels)
    bias: np.ndarray     # (out_channels,)


@dataclass(frozen=True)
class Head:
    name: str
    start: int
    width: int


@dataclass(frozen=True)
class RegressorModel:
    problem_kind: str
    input_channels: int
    norm_mean: np.ndarray
    norm_std: np.ndarray
    layers: tuple[Layer, ...]
    heads: tuple[Head, ...]

    def __post_init__(self):
        _validate_model(self)


def _validate_model(model: RegressorModel) -> None:
    if model.problem_kind not in INPUT_CHANNELS:
        raise ValueError(f"unknown problem_kind {model.problem_kind!r}")
    if model.norm_mean.shape != (model.input_channels,) or model.norm_std.shape != (model.input_channels,):
        raise ValueError("normalization arrays must match input_channels")
    if np.any(model.norm_std <= 0):
        raise ValueError("normalization std must be positive")
    if not model.layers:
        raise ValueError("model has no layers")
    prev = model.input_channels
    seen_fc = False
    for layer in model.layers:
        if layer.kind not in ("conv1d", "fully_connected"):
            raise ValueError(f"unknown layer kind {layer.kind!r}")
        if layer.kind == "conv1d" and seen_fc:
            raise ValueError("conv1d layers must precede fully_connected layers")
        if layer.kind == "fully_connected":
            seen_fc = True
        if layer.kernel_width != 1:
            raise ValueError("only kernel width 1 is supported")
        if layer.in_channels != prev:
            raise ValueError("adjacent layer channel counts incompatible")
        if layer.weights.shape != (layer.out_channels, layer.in_channels):
            raise ValueError("layer weight shape mismatch")
        if layer.bias.shape != (layer.out_channels,):
            raise ValueError("layer bias shape mismatch")
        prev = layer.out_channels
    if not seen_fc:
        raise ValueError("model needs at least one fully_connected layer")
    if not model.heads:
        raise ValueError("model has no heads")
    total = 0
    for head in model.heads:
        expected = HEAD_WIDTHS.get(head.name)
        if expected is None:
            raise ValueError(f"unknown head {head.name!r}")
        if head.width != expected:
            raise ValueError(f"head {head.name!r} must have width {expected}")
        if head.start != total:
            raise ValueError("heads must tile the output contiguously")
        total += head.width
    if total != prev:
        raise ValueError("head slice widths must sum to final layer width")


def save_regressor(model: RegressorModel, path: str | Path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "problem_kind": model.problem_kind,
        "input_channels": model.input_channels,
        "normalization": {
            "mean": model.norm_mean.tolist(),
            "std": model.norm_std.tolist(),
        },
        "layers": [
            {
                "kind": layer.kind,
                "in_channels": layer.in_channels,
                "out_channels": layer.out_channels,
                "kernel_width": layer.kernel_width,
                "weights": layer.weights.reshape(-1).tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in model.layers
        ],
        "heads": [
            {"name": head.name, "start": head.start, "width": head.width}
            for head in model.heads
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_regressor(path: str | Path) -> RegressorModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"unreadable weight file: {exc}") from exc
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {doc.get('format_version')!r}")
    layers = []
    for raw in doc["layers"]:
        out_c, in_c = int(raw["out_channels"]), int(raw["in_channels"])
        weights = np.asarray(raw["weights"], dtype=float).reshape(out_c, in_c)
        layers.append(
            Layer(
                kind=raw["kind"],
                in_channels=in_c,
                out_channels=out_c,
                kernel_width=int(raw["kernel_width"]),
                weights=weights,
                bias=np.asarray(raw["bias"], dtype=float),
            )
        )
    heads = tuple(
        Head(raw["name"], int(raw["start"]), int(raw["width"])) for raw in doc["heads"]
    )
    return RegressorModel(
        problem_kind=doc["problem_kind"],
        input_channels=int(doc["input_channels"]),
        norm_mean=np.asarray(doc["normalization"]["mean"], dtype=float),
        norm_std=np.asarray(doc["normalization"]["std"], dtype=float),
        layers=tuple(layers),
        heads=heads,
    )


def forward(model: RegressorModel, inputs: np.ndarray) -> np.ndarray:
    """Raw head vector for an N x C correspondence matrix.

    Kernel-1 convolutions plus mean pooling make the output invariant to
    row permutations of the input.
    """
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.input_channels or x.shape[0] < 1:
        raise ValueError("model/input incompatible")
    x = (x - model.norm_mean[None, :]) / model.norm_std[None, :]
    pooled = None
    fc_layers = [l for l in model.layers if l.kind == "fully_connected"]
    for layer in model.layers:
        if layer.kind == "conv1d":
            x = np.maximum(x @ layer.weights.T + layer.bias[None, :], 0.0)
        else:
            if pooled is None:
                pooled = x.mean(axis=0)
            pooled = layer.weights @ pooled + layer.bias
            if layer is not fc_layers[-1]:
                pooled = np.maximum(pooled, 0.0)
    return pooled


def regress_pose(model: RegressorModel, inputs: np.ndarray) -> InitialSolution:
    """Run the forward pass and decode the heads into a pose.

    Models without a translation head (the quaternion-only absolute-pose
    regressor) get a zero translation placeholder; callers recover the
    translation from correspondences and the regressed rotation.
    """
    out = forward(model, inputs)
    q: Quaternion | None = None
    t = np.zeros(3)
    s = 1.0
    for head in model.heads:
        chunk = out[head.start : head.start + head.width]
        if head.name == "quaternion":
            q = Quaternion.from_array(chunk)
        elif head.name == "rotation6d":
            q = rotmat_to_quat(sixd_to_rotmat(Rotation6D(chunk[:3], chunk[3:])))
        elif head.name == "translation":
            t = chunk
        elif head.name == "scale":
            s = float(np.exp(chunk[0]))
    if q is None:
        raise ValueError("model has no rotation head")
    return InitialSolution(Pose(q, t, s), Provenance.LEARNED)


def upnp_input_matrix(corrs) -> np.ndarray:
    """Row-wise stacking (p, f, v) of 2D-3D correspondences, N x 9."""
    return np.stack([np.concatenate([c.p, c.f, c.v]) for c in corrs])


def grps_input_matrix(corrs) -> np.ndarray:
    """Row-wise stacking (f, v, f', v') of 2D-2D correspondences, N x 12."""
    return np.stack([np.concatenate([c.f, c.v, c.f_prime, c.v_prime]) for c in corrs])


def make_oracle_initializer(gt: Pose, rot_deg: float, trans_frac: float, scale_frac: float, seed: int):
    """Solver-facing adapter: ignores the correspondences, perturbs gt."""
    sol = perturbed_oracle(gt, rot_deg, trans_frac, scale_frac, seed)

    def initializer(_corrs) -> InitialSolution:
        return sol

    return initializer


def make_random_initializer(seed: int, problem_kind: str):
    """Solver-facing adapter drawing a fresh random pose per call."""
    rng = np.random.default_rng(seed)

    def initializer(_corrs) -> InitialSolution:
        return InitialSolution(random_pose(rng, problem_kind), Provenance.RANDOM)

    return initializer


def make_regressor_initializer(model: RegressorModel):
    """Solver-facing adapter running the learned forward pass on the sample.

    For the absolute-pose problem the translation is recovered from the
    correspondences at the regressed rotation.
    """

    def initializer(corrs) -> InitialSolution:
        if model.problem_kind == "upnp":
            from .upnp import recover_translation_depths

            sol = regress_pose(model, upnp_input_matrix(corrs))
            t, _ = recover_translation_depths(sol.pose.q.as_array(), corrs)
            return InitialSolution(Pose(sol.pose.q, t, 1.0), Provenance.LEARNED)
        return regress_pose(model, grps_input_matrix(corrs))

    return initializer
