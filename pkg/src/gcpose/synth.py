"""Synthetic scene generation with a virtual-pinhole pixel noise model.

Scenes follow the benchmark protocols of the two pose problems: world
points in an axis-aligned box, camera origins in the unit cube, per-axis
rotation angles in a symmetric range, and (for the relative problem) a
scale drawn from a positive range.  Pixel noise is applied through a
canonical per-ray virtual pinhole whose optical axis is the noise-free
bearing, so "k pixels at focal length F" is well defined for arbitrary ray
directions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import Pose, Quaternion, rotmat_to_quat
from .grps import Correspondence2D2D
from .upnp import Correspondence2D3D

_RESAMPLE_LIMIT = 100


@dataclass(frozen=True)
class SceneConfig:
    problem_kind: str
    n_points: int
    n_cameras: int
    point_volume: tuple[tuple[float, float, float], tuple[float, float, float]]
    camera_volume: tuple[tuple[float, float, float], tuple[float, float, float]] = ((-1, -1, -1), (1, 1, 1))
    rotation_angle_range: float = math.pi / 2
    scale_range: tuple[float, float] = (0.1, 5.0)
    noise_px: float = 0.0
    virtual_focal_px: float = 800.0
    noise_model: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.problem_kind not in ("upnp", "grps"):
            raise ValueError(f"unknown problem_kind {self.problem_kind!r}")
        if self.n_points < 1 or self.n_cameras < 1:
            raise ValueError("n_points and n_cameras must be positive")
        lo, hi = np.asarray(self.point_volume[0]), np.asarray(self.point_volume[1])
        if np.any(hi <= lo):
            raise ValueError("empty point volume")
        if self.noise_px < 0:
            raise ValueError("noise_px must be nonnegative")
        if self.virtual_focal_px <= 0:
            raise ValueError("virtual_focal_px must be positive")
        if self.noise_model not in ("uniform", "gaussian"):
            raise ValueError(f"unknown noise_model {self.noise_model!r}")


def default_upnp_config(seed: int = 0, noise_px: float = 0.0, **overrides) -> SceneConfig:
    """16 points in [-1,1]^2 x [4,8] seen by 4 cameras in the unit cube."""
    cfg = SceneConfig(
        problem_kind="upnp",
        n_points=16,
        n_cameras=4,
        point_volume=((-1, -1, 4), (1, 1, 8)),
        noise_px=noise_px,
        seed=seed,
    )
    return replace(cfg, **overrides) if overrides else cfg


def default_grps_config(seed: int = 0, noise_px: float = 0.0, **overrides) -> SceneConfig:
    """7 points in [-1,1]^2 x [2,20] seen by two 3-camera generalized views."""
    cfg = SceneConfig(
        problem_kind="grps",
        n_points=7,
        n_cameras=3,
        point_volume=((-1, -1, 2), (1, 1, 20)),
        noise_px=noise_px,
        seed=seed,
    )
    return replace(cfg, **overrides) if overrides else cfg


@dataclass(frozen=True)
class LabeledScene:
    config: SceneConfig
    corrs: list
    gt_pose: Pose
    gt_depths: np.ndarray          # (N,) for upnp, (N, 2) for grps
    clean_bearings: np.ndarray     # (N, 3) for upnp, (N, 2, 3) for grps

    @property
    def problem_kind(self) -> str:
        return self.config.problem_kind


def _bearing_frame(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal in-plane axes of the virtual image at f."""
    pivot = np.zeros(3)
    pivot[int(np.argmin(np.abs(f)))] = 1.0
    e1 = np.cross(pivot, f)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(f, e1)


def add_pixel_noise(
    f: np.ndarray,
    noise_px: float,
    focal_px: float,
    rng: np.random.Generator,
    model: str = "uniform",
) -> np.ndarray:
    """Perturb a unit bearing by pixel noise on its virtual image plane.

    The bearing projects to the principal point of a pinhole whose optical
    axis is the bearing itself; both pixel coordinates are perturbed
    (uniform in [-noise_px, noise_px], or Gaussian with sigma = noise_px)
    and the pixel is back-projected and renormalized.
    """
    f = np.asarray(f, dtype=float).reshape(3)
    if abs(np.linalg.norm(f) - 1.0) > 1e-6:
        raise ValueError("bearing outside virtual image model")
    if noise_px == 0.0:
        return f.copy()
    if model == "uniform":
        du, dv = rng.uniform(-noise_px, noise_px, size=2)
    elif model == "gaussian":
        du, dv = rng.normal(0.0, noise_px, size=2)
    else:
        raise ValueError(f"unknown noise_model {model!r}")
    e1, e2 = _bearing_frame(f)
    ray = focal_px * f + du * e1 + dv * e2
    return ray / np.linalg.norm(ray)


def _sample_rotation(rng: np.random.Generator, angle_range: float) -> np.ndarray:
    """Rotation from independent per-axis angles uniform in +-angle_range."""
    ax, ay, az = rng.uniform(-angle_range, angle_range, size=3)
    cx, sx = math.cos(ax), math.sin(ax)
    cy, sy = math.cos(ay), math.sin(ay)
    cz, sz = math.cos(az), math.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def _sample_box(rng: np.random.Generator, volume, size: int) -> np.ndarray:
    lo = np.asarray(volume[0], dtype=float)
    hi = np.asarray(volume[1], dtype=float)
    return rng.uniform(lo, hi, size=(size, 3))


def gen_upnp_scene(cfg: SceneConfig) -> LabeledScene:
    """Absolute-pose scene: every point observed by every rig camera.

    Each of the n_points world points is seen from each of the n_cameras
    ray origins, giving n_points * n_cameras correspondences whose bearings
    are the rays from camera origin to the rigidly transformed point.
    """
    if cfg.problem_kind != "upnp":
        raise ValueError("config is not an upnp config")
    rng = np.random.default_rng(cfg.seed)
    rot = _sample_rotation(rng, cfg.rotation_angle_range)
    t = rng.uniform(-1.0, 1.0, size=3)
    cameras = _sample_box(rng, cfg.camera_volume, cfg.n_cameras)
    corrs: list[Correspondence2D3D] = []
    n_corrs = cfg.n_points * cfg.n_cameras
    depths = np.empty(n_corrs)
    clean = np.empty((n_corrs, 3))
    i = 0
    for _ in range(cfg.n_points):
        for _ in range(_RESAMPLE_LIMIT):
            p = _sample_box(rng, cfg.point_volume, 1)[0]
            rig_point = rot @ p + t
            if all(np.linalg.norm(rig_point - v) > 1e-6 for v in cameras):
                break
        else:
            raise RuntimeError("could not sample a non-degenerate point")
        for v in cameras:
            ray = rig_point - v
            depth = float(np.linalg.norm(ray))
            f_clean = ray / depth
            f = add_pixel_noise(f_clean, cfg.noise_px, cfg.virtual_focal_px, rng, cfg.noise_model)
            corrs.append(Correspondence2D3D(p, f, v))
            depths[i] = depth
            clean[i] = f_clean
            i += 1
    pose = Pose(rotmat_to_quat(rot), t, 1.0)
    return LabeledScene(cfg, corrs, pose, depths, clean)


def gen_grps_scene(cfg: SceneConfig) -> LabeledScene:
    """Relative pose and scale scene from two simulated generalized views.

    Two view frames are placed in the unit cube with random rotations; the
    second view's coordinates are divided by the scene scale (reconstruction
    scale ambiguity).  The ground-truth similarity is extracted from the
    pair of view poses: R = R1^T R2, t = R1^T (o2 - o1), s = scale.
    """
    if cfg.problem_kind != "grps":
        raise ValueError("config is not a grps config")
    rng = np.random.default_rng(cfg.seed)
    rot1 = _sample_rotation(rng, cfg.rotation_angle_range)
    rot2 = _sample_rotation(rng, cfg.rotation_angle_range)
    o1 = rng.uniform(-1.0, 1.0, size=3)
    o2 = rng.uniform(-1.0, 1.0, size=3)
    scale = float(rng.uniform(*cfg.scale_range))
    cams1 = _sample_box(rng, cfg.camera_volume, cfg.n_cameras)
    cams2 = _sample_box(rng, cfg.camera_volume, cfg.n_cameras)
    a1 = rng.integers(0, cfg.n_cameras, size=cfg.n_points)
    a2 = rng.integers(0, cfg.n_cameras, size=cfg.n_points)
    corrs: list[Correspondence2D2D] = []
    depths = np.empty((cfg.n_points, 2))
    clean = np.empty((cfg.n_points, 2, 3))
    for i in range(cfg.n_points):
        v = cams1[a1[i]]
        vp = cams2[a2[i]]
        for _ in range(_RESAMPLE_LIMIT):
            x = _sample_box(rng, cfg.point_volume, 1)[0]
            y1 = rot1.T @ (x - o1)
            z2 = rot2.T @ (x - o2) / scale
            d1 = float(np.linalg.norm(y1 - v))
            d2 = float(np.linalg.norm(z2 - vp))
            if d1 > 1e-6 and d2 > 1e-6:
                break
        else:
            raise RuntimeError("could not sample a non-degenerate point")
        f_clean = (y1 - v) / d1
        fp_clean = (z2 - vp) / d2
        f = add_pixel_noise(f_clean, cfg.noise_px, cfg.virtual_focal_px, rng, cfg.noise_model)
        fp = add_pixel_noise(fp_clean, cfg.noise_px, cfg.virtual_focal_px, rng, cfg.noise_model)
        corrs.append(Correspondence2D2D(f, v, fp, vp))
        depths[i] = (d1, scale * d2)
        clean[i, 0] = f_clean
        clean[i, 1] = fp_clean
    rot = rot1.T @ rot2
    t = rot1.T @ (o2 - o1)
    pose = Pose(rotmat_to_quat(rot), t, scale)
    return LabeledScene(cfg, corrs, pose, depths, clean)


def gen_scene(cfg: SceneConfig) -> LabeledScene:
    return gen_upnp_scene(cfg) if cfg.problem_kind == "upnp" else gen_grps_scene(cfg)


def corrupt_with_outliers(
    scene: LabeledScene, outlier_ratio: float, rng: np.random.Generator
) -> tuple[list, np.ndarray]:
    """Replace a fraction of correspondences with random-bearing outliers.

    Returns the corrupted correspondence list and the inlier mask.
    """
    n = len(scene.corrs)
    n_out = int(round(outlier_ratio * n))
    outlier_idx = rng.choice(n, size=n_out, replace=False)
    inlier_mask = np.ones(n, dtype=bool)
    inlier_mask[outlier_idx] = False
    corrs = list(scene.corrs)
    for i in outlier_idx:
        if scene.problem_kind == "grps":
            c = corrs[i]
            f = rng.standard_normal(3)
            fp = rng.standard_normal(3)
            corrs[i] = Correspondence2D2D(
                f / np.linalg.norm(f), c.v, fp / np.linalg.norm(fp), c.v_prime
            )
        else:
            c = corrs[i]
            f = rng.standard_normal(3)
            corrs[i] = Correspondence2D3D(c.p, f / np.linalg.norm(f), c.v)
    return corrs, inlier_mask


# --- dataset file format: one JSON scene record per line -------------------

def _config_to_dict(cfg: SceneConfig) -> dict:
    return {
        "problem_kind": cfg.problem_kind,
        "n_points": cfg.n_points,
        "n_cameras": cfg.n_cameras,
        "point_volume": [list(cfg.point_volume[0]), list(cfg.point_volume[1])],
        "camera_volume": [list(cfg.camera_volume[0]), list(cfg.camera_volume[1])],
        "rotation_angle_range": cfg.rotation_angle_range,
        "scale_range": list(cfg.scale_range),
        "noise_px": cfg.noise_px,
        "virtual_focal_px": cfg.virtual_focal_px,
        "noise_model": cfg.noise_model,
        "seed": cfg.seed,
    }


def _config_from_dict(doc: dict) -> SceneConfig:
    return SceneConfig(
        problem_kind=doc["problem_kind"],
        n_points=int(doc["n_points"]),
        n_cameras=int(doc["n_cameras"]),
        point_volume=(tuple(doc["point_volume"][0]), tuple(doc["point_volume"][1])),
        camera_volume=(tuple(doc["camera_volume"][0]), tuple(doc["camera_volume"][1])),
        rotation_angle_range=float(doc["rotation_angle_range"]),
        scale_range=tuple(doc["scale_range"]),
        noise_px=float(doc["noise_px"]),
        virtual_focal_px=float(doc["virtual_focal_px"]),
        noise_model=doc["noise_model"],
        seed=int(doc["seed"]),
    )


def scene_to_record(scene: LabeledScene) -> dict:
    gt = {
        "q": list(scene.gt_pose.q.as_array()),
        "t": list(scene.gt_pose.t),
        "s": scene.gt_pose.s,
    }
    if scene.problem_kind == "upnp":
        corrs = {
            "p": [list(c.p) for c in scene.corrs],
            "f": [list(c.f) for c in scene.corrs],
            "v": [list(c.v) for c in scene.corrs],
        }
    else:
        corrs = {
            "f": [list(c.f) for c in scene.corrs],
            "v": [list(c.v) for c in scene.corrs],
            "f_prime": [list(c.f_prime) for c in scene.corrs],
            "v_prime": [list(c.v_prime) for c in scene.corrs],
        }
    return {
        "kind": scene.problem_kind,
        "config": _config_to_dict(scene.config),
        "gt": gt,
        "gt_depths": scene.gt_depths.tolist(),
        "clean_bearings": scene.clean_bearings.tolist(),
        "corrs": corrs,
    }


def scene_from_record(doc: dict) -> LabeledScene:
    cfg = _config_from_dict(doc["config"])
    gt = doc["gt"]
    pose = Pose(Quaternion.from_array(np.asarray(gt["q"])), np.asarray(gt["t"]), float(gt["s"]))
    raw = doc["corrs"]
    if doc["kind"] == "upnp":
        corrs = [
            Correspondence2D3D(p, f, v)
            for p, f, v in zip(raw["p"], raw["f"], raw["v"])
        ]
    else:
        corrs = [
            Correspondence2D2D(f, v, fp, vp)
            for f, v, fp, vp in zip(raw["f"], raw["v"], raw["f_prime"], raw["v_prime"])
        ]
    return LabeledScene(
        cfg,
        corrs,
        pose,
        np.asarray(doc["gt_depths"], dtype=float),
        np.asarray(doc["clean_bearings"], dtype=float),
    )


def write_dataset(scenes: Sequence[LabeledScene], path: str | Path) -> None:
    with open(path, "w") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene_to_record(scene)))
            fh.write("\n")


def read_dataset(path: str | Path) -> list[LabeledScene]:
    scenes = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                scenes.append(scene_from_record(json.loads(line)))
    return scenes
