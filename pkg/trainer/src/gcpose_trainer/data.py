"""Dataset loading: newline-delimited scene records to training tensors.

Scenes come from the solver package's `gcpose synth` command: one JSON
document per line with the correspondence arrays and the ground-truth
pose.  Inputs are the row-wise stacked correspondences (p, f, v for the
absolute-pose problem; f, v, f', v' for relative pose and scale); all
scenes in one dataset share the correspondence count, so a dataset maps to
one (scenes, rows, channels) array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

INPUT_CHANNELS = {"upnp": 9, "grps": 12}


@dataclass
class PoseDataset:
    kind: str
    inputs: np.ndarray     # (scenes, rows, channels) float32
    quaternions: np.ndarray  # (scenes, 4) canonical sign
    translations: np.ndarray  # (scenes, 3)
    scales: np.ndarray     # (scenes,)
    norm_mean: np.ndarray  # per channel, computed over the training rows
    norm_std: np.ndarray

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _scene_rows(doc: dict) -> np.ndarray:
    corrs = doc["corrs"]
    if doc["kind"] == "upnp":
        parts = [corrs["p"], corrs["f"], corrs["v"]]
    else:
        parts = [corrs["f"], corrs["v"], corrs["f_prime"], corrs["v_prime"]]
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts], axis=1)


def _canonical_quaternion(q: np.ndarray) -> np.ndarray:
    for c in q:
        if c != 0.0:
            return q if c > 0 else -q
    raise ValueError("zero quaternion in dataset")


def load_dataset(path: str | Path, normalize_from: "PoseDataset | None" = None) -> PoseDataset:
    """Read a dataset file; normalization constants come from the data
    itself unless an existing dataset (the training split) provides them."""
    inputs, quats, trans, scales = [], [], [], []
    kind = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if kind is None:
                kind = doc["kind"]
            elif doc["kind"] != kind:
                raise ValueError("mixed problem kinds in one dataset")
            inputs.append(_scene_rows(doc))
            gt = doc["gt"]
            quats.append(_canonical_quaternion(np.asarray(gt["q"], dtype=np.float64)))
            trans.append(np.asarray(gt["t"], dtype=np.float64))
            scales.append(float(gt["s"]))
    if not inputs:
        raise ValueError(f"empty dataset: {path}")
    x = np.stack(inputs).astype(np.float32)
    if normalize_from is not None:
        mean, std = normalize_from.norm_mean, normalize_from.norm_std
    else:
        flat = x.reshape(-1, x.shape[-1]).astype(np.float64)
        mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        std[std < 1e-6] = 1.0
    return PoseDataset(
        kind=kind,
        inputs=x,
        quaternions=np.stack(quats).astype(np.float32),
        translations=np.stack(trans).astype(np.float32),
        scales=np.asarray(scales, dtype=np.float32),
        norm_mean=mean,
        norm_std=std,
    )


def split(dataset: PoseDataset, holdout_fraction: float, seed: int) -> tuple[PoseDataset, PoseDataset]:
    """Deterministic train/held-out split; both shares reuse the training
    split's normalization constants."""
    n = len(dataset)
    n_hold = max(1, int(round(holdout_fraction * n)))
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    hold_idx, train_idx = order[:n_hold], order[n_hold:]

    def take(idx):
        return PoseDataset(
            kind=dataset.kind,
            inputs=dataset.inputs[idx],
            quaternions=dataset.quaternions[idx],
            translations=dataset.translations[idx],
            scales=dataset.scales[idx],
            norm_mean=dataset.norm_mean,
            norm_std=dataset.norm_std,
        )

    train = take(train_idx)
    flat = train.inputs.reshape(-1, train.inputs.shape[-1]).astype(np.float64)
    std = flat.std(axis=0)
    std[std < 1e-6] = 1.0
    train.norm_mean[:] = flat.mean(axis=0)
    train.norm_std[:] = std
    hold = take(hold_idx)
    return train, hold
