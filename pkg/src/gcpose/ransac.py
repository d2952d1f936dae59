"""Vanilla RANSAC around the pose solvers.

Hypotheses come from minimal (or near-minimal) samples solved by the
wrapped solver, each scored by the normalized reprojection error: the chord
distance between a measured unit bearing and the bearing the hypothesis
pose would have produced for that correspondence.  Termination follows the
standard adaptive confidence bound or the iteration cap, whichever comes
first.  No inner refit is performed; the best-scoring hypothesis is the
answer.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import grps, upnp
from .geometry import Pose
from .tracker import TrackStatus


@dataclass(frozen=True)
class RansacConfig:
    max_iters: int = 200
    confidence: float = 0.99
    inlier_threshold: float = 0.01
    sample_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        if self.inlier_threshold <= 0.0:
            raise ValueError("inlier_threshold must be positive")
        if self.max_iters < 1 or self.sample_size < 1:
            raise ValueError("max_iters and sample_size must be positive")


@dataclass(frozen=True)
class RansacResult:
    best_pose: Pose
    inlier_mask: np.ndarray
    iterations_run: int
    status_counts: dict
    wall_time_s: float

    @property
    def inlier_count(self) -> int:
        return int(self.inlier_mask.sum())


def residual_metric(corr, pose: Pose) -> float:
    """Chord distance between a measured bearing and its simulated twin.

    Correspondences whose depth recovery is ill-conditioned score +inf and
    are counted as outliers.
    """
    try:
        if isinstance(corr, grps.Correspondence2D2D):
            sim = grps.simulate(pose, [corr])[0]
        else:
            sim = upnp.simulate(pose, [corr])[0]
    except ValueError:
        return float("inf")
    return float(np.linalg.norm(sim.f - corr.f))


def _residuals_grps(corrs: Sequence[grps.Correspondence2D2D], pose: Pose) -> np.ndarray:
    f, v, fp, vp = grps._stack(corrs)
    rot = pose.rotation_matrix()
    alpha, alpha_p, cond = grps._recover_depths_batch(f, v, fp, vp, rot, pose.t, pose.s)
    points = (alpha_p[:, None] * fp + pose.s * vp) @ rot.T + pose.t[None, :]
    rays = points - v
    norms = np.linalg.norm(rays, axis=1)
    out = np.full(len(corrs), np.inf)
    ok = (cond <= grps._DEPTH_COND_LIMIT) & (norms > 1e-12)
    signed = np.where(alpha < 0.0, -norms, norms)
    bearings = rays[ok] / signed[ok, None]
    out[ok] = np.linalg.norm(bearings - f[ok], axis=1)
    return out


def _residuals_upnp(corrs: Sequence[upnp.Correspondence2D3D], pose: Pose) -> np.ndarray:
    p, f, v = upnp._stack(corrs)
    rays = p @ pose.rotation_matrix().T + pose.t[None, :] - v
    norms = np.linalg.norm(rays, axis=1)
    out = np.full(len(corrs), np.inf)
    ok = norms > 1e-12
    bearings = rays[ok] / norms[ok, None]
    out[ok] = np.linalg.norm(bearings - f[ok], axis=1)
    return out


def residuals(corrs: Sequence, pose: Pose) -> np.ndarray:
    """Vectorized :func:`residual_metric` over a correspondence list."""
    if isinstance(corrs[0], grps.Correspondence2D2D):
        return _residuals_grps(corrs, pose)
    return _residuals_upnp(corrs, pose)


def _adaptive_bound(inlier_fraction: float, sample_size: int, confidence: float) -> float:
    w_m = inlier_fraction**sample_size
    if w_m >= 1.0:
        return 1.0
    denom = math.log1p(-w_m)  # exact even when w_m underflows toward 0
    if denom == 0.0:
        return math.inf
    return math.log(1.0 - confidence) / denom


def ransac_solve(
    corrs: Sequence,
    solver: Callable[[Sequence], object],
    config: RansacConfig,
) -> RansacResult:
    """Run vanilla RANSAC over uniform minimal samples.

    ``solver`` maps a sampled correspondence subset to a solve result with a
    ``pose`` and a ``track`` status (the pose solvers' return type).
    Degenerate samples surface as solver ValueErrors and consume an
    iteration; diverged or singular tracks are skipped the same way.
    """
    n = len(corrs)
    if n < config.sample_size:
        raise ValueError("fewer correspondences than sample_size")
    rng = np.random.default_rng(config.seed)
    started = time.perf_counter()
    best_count = -1
    best_residual_sum = math.inf
    best_pose: Pose | None = None
    best_mask: np.ndarray | None = None
    status_counts: Counter = Counter()
    bound = math.inf
    iterations = 0
    while iterations < config.max_iters and iterations < bound:
        iterations += 1
        sample_idx = rng.choice(n, size=config.sample_size, replace=False)
        sample = [corrs[i] for i in sample_idx]
        try:
            result = solver(sample)
        except ValueError:
            status_counts["degenerate_sample"] += 1
            continue
        status_counts[result.track.status.value] += 1
        if result.track.status in (TrackStatus.DIVERGED, TrackStatus.SINGULAR_JACOBIAN):
            continue
        res = residuals(corrs, result.pose)
        mask = res < config.inlier_threshold
        count = int(mask.sum())
        residual_sum = float(res[mask].sum())
        # primary score is the inlier count; equal counts (common once the
        # count saturates) are broken by the summed inlier residual
        if count > best_count or (count == best_count and residual_sum < best_residual_sum):
            best_count = count
            best_residual_sum = residual_sum
            best_pose = result.pose
            best_mask = mask
            bound = _adaptive_bound(count / n, config.sample_size, config.confidence)
    if best_pose is None:
        raise RuntimeError("no hypothesis found")
    return RansacResult(
        best_pose=best_pose,
        inlier_mask=best_mask,
        iterations_run=iterations,
        status_counts=dict(status_counts),
        wall_time_s=time.perf_counter() - started,
    )
