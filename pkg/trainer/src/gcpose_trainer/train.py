"""Training loop: Adam over the pointwise-conv regressor, then export."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .data import INPUT_CHANNELS, PoseDataset, load_dataset, split
from .export import export_weights
from .losses import (
    UncertaintyWeightedLoss,
    rotation_loss_6d,
    rotation_loss_quaternion,
    scale_loss,
    translation_loss,
)
from .model import DEFAULT_CONV_WIDTHS, PoseRegressor


@dataclass
class TrainConfig:
    dataset: str
    out_path: str
    kind: str | None = None          # inferred from the dataset when None
    conv_widths: tuple = ()
    fc_widths: tuple = ()
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    cosine_decay: bool = True        # anneal the learning rate to ~0 over the run
    rows_per_sample: int | None = None  # train-time random row subset (set augmentation)
    holdout_fraction: float = 0.1
    seed: int = 0


@dataclass
class TrainReport:
    kind: str
    epochs: int
    train_size: int
    holdout_size: int
    final_loss: float
    holdout_median_rotation_deg: float
    holdout_median_translation: float = math.nan
    holdout_median_scale_pct: float = math.nan
    loss_history: list = field(default_factory=list)


def _task_losses(model: PoseRegressor, output: torch.Tensor, quats, trans, scales) -> dict:
    losses = {}
    for name, start, width in model.head_slices():
        chunk = output[:, start : start + width]
        if name == "quaternion":
            losses["rotation"] = rotation_loss_quaternion(chunk, quats)
        elif name == "rotation6d":
            losses["rotation"] = rotation_loss_6d(chunk, quats)
        elif name == "translation":
            losses["translation"] = translation_loss(chunk, trans)
        elif name == "scale":
            losses["scale"] = scale_loss(chunk[:, 0], scales)
    return losses


def _tensors(ds: PoseDataset, device):
    x = (ds.inputs.astype(np.float64) - ds.norm_mean) / ds.norm_std
    return (
        torch.from_numpy(np.ascontiguousarray(x.transpose(0, 2, 1))).float().to(device),
        torch.from_numpy(ds.quaternions).to(device),
        torch.from_numpy(ds.translations).to(device),
        torch.from_numpy(ds.scales).to(device),
    )


def evaluate(model: PoseRegressor, ds: PoseDataset) -> dict:
    """Median held-out errors of the decoded heads."""
    model.eval()
    x, quats, trans, scales = _tensors(ds, "cpu")
    with torch.no_grad():
        out = model(x)
        losses = _task_losses(model, out, quats, trans, scales)
    report = {"rotation_deg": float(np.degrees(np.median(losses["rotation"].numpy())))}
    if "translation" in losses:
        report["translation"] = float(np.median(losses["translation"].numpy()))
    if "scale" in losses:
        report["scale_pct"] = float(100.0 * np.median(losses["scale"].numpy()))
    return report


def train(config: TrainConfig) -> tuple[PoseRegressor, PoseDataset, TrainReport]:
    torch.manual_seed(config.seed)
    full = load_dataset(config.dataset)
    kind = config.kind or full.kind
    if kind != full.kind:
        raise ValueError(f"dataset holds {full.kind!r} scenes, not {kind!r}")
    if full.inputs.shape[-1] != INPUT_CHANNELS[kind]:
        raise ValueError("dataset channel count does not match the problem kind")
    if config.holdout_fraction > 0 and len(full) > 4:
        train_ds, holdout_ds = split(full, config.holdout_fraction, config.seed)
    else:
        train_ds = holdout_ds = full

    model = PoseRegressor(
        kind,
        INPUT_CHANNELS[kind],
        conv_widths=config.conv_widths or DEFAULT_CONV_WIDTHS[kind],
        fc_widths=config.fc_widths,
    )
    criterion = UncertaintyWeightedLoss(
        ("rotation",) if kind == "upnp" else ("rotation", "translation", "scale")
    )
    optimizer = torch.optim.Adam(
        list(model.parameters()) + list(criterion.parameters()), lr=config.learning_rate
    )
    scheduler = (
        torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=config.epochs)
        if config.cosine_decay
        else None
    )
    x, quats, trans, scales = _tensors(train_ds, "cpu")
    n = x.shape[0]
    n_rows = x.shape[2]
    generator = torch.Generator().manual_seed(config.seed)
    history = []
    model.train()
    for _ in range(config.epochs):
        order = torch.randperm(n, generator=generator)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if idx.shape[0] < 2:
                continue  # batch norm needs more than one row
            batch = x[idx]
            if config.rows_per_sample and config.rows_per_sample < n_rows:
                rows = torch.randperm(n_rows, generator=generator)[: config.rows_per_sample]
                batch = batch[:, :, rows]
            optimizer.zero_grad()
            out = model(batch)
            loss = criterion(_task_losses(model, out, quats[idx], trans[idx], scales[idx]))
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
            batches += 1
        if scheduler is not None:
            scheduler.step()
        history.append(epoch_loss / max(batches, 1))

    holdout = evaluate(model, holdout_ds)
    report = TrainReport(
        kind=kind,
        epochs=config.epochs,
        train_size=len(train_ds),
        holdout_size=len(holdout_ds),
        final_loss=history[-1] if history else math.nan,
        holdout_median_rotation_deg=holdout["rotation_deg"],
        holdout_median_translation=holdout.get("translation", math.nan),
        holdout_median_scale_pct=holdout.get("scale_pct", math.nan),
        loss_history=history,
    )
    return model, train_ds, report


def train_and_export(config: TrainConfig) -> TrainReport:
    model, train_ds, report = train(config)
    export_weights(model, train_ds.norm_mean, train_ds.norm_std, config.out_path)
    return report
