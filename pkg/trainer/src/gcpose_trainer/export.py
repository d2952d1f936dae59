"""Batch-norm folding and portable weight-file export.

The solver package's inference format carries only affine layers: each
conv + batch-norm pair folds into one conv with
W' = diag(gamma / sqrt(var + eps)) W and
b' = (b - mean) * gamma / sqrt(var + eps) + beta.
Folding happens in float64 so the exported file reproduces the eval-mode
network to numerical precision.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .model import PoseRegressor

FORMAT_VERSION = 1


def _folded_conv(conv: nn.Conv1d, bn: nn.BatchNorm1d) -> tuple[np.ndarray, np.ndarray]:
    weight = conv.weight.detach().double().numpy()[:, :, 0]
    bias = conv.bias.detach().double().numpy()
    gamma = bn.weight.detach().double().numpy()
    beta = bn.bias.detach().double().numpy()
    mean = bn.running_mean.detach().double().numpy()
    var = bn.running_var.detach().double().numpy()
    scale = gamma / np.sqrt(var + bn.eps)
    return weight * scale[:, None], (bias - mean) * scale + beta


def export_layers(model: PoseRegressor) -> list[dict]:
    layers = []
    modules = list(model.encoder)
    i = 0
    while i < len(modules):
        conv = modules[i]
        assert isinstance(conv, nn.Conv1d)
        bn = modules[i + 1]
        assert isinstance(bn, nn.BatchNorm1d)
        weight, bias = _folded_conv(conv, bn)
        layers.append(
            {
                "kind": "conv1d",
                "in_channels": conv.in_channels,
                "out_channels": conv.out_channels,
                "kernel_width": 1,
                "weights": weight.reshape(-1).tolist(),
                "bias": bias.tolist(),
            }
        )
        i += 3  # conv, bn, relu
    for module in model.head:
        if isinstance(module, nn.Linear):
            layers.append(
                {
                    "kind": "fully_connected",
                    "in_channels": module.in_features,
                    "out_channels": module.out_features,
                    "kernel_width": 1,
                    "weights": module.weight.detach().double().numpy().reshape(-1).tolist(),
                    "bias": module.bias.detach().double().numpy().tolist(),
                }
            )
    return layers


def export_weights(
    model: PoseRegressor,
    norm_mean: np.ndarray,
    norm_std: np.ndarray,
    path: str | Path,
) -> None:
    model.eval()
    doc = {
        "format_version": FORMAT_VERSION,
        "problem_kind": model.kind,
        "input_channels": model.in_channels,
        "normalization": {
            "mean": np.asarray(norm_mean, dtype=float).tolist(),
            "std": np.asarray(norm_std, dtype=float).tolist(),
        },
        "layers": export_layers(model),
        "heads": [
            {"name": name, "start": start, "width": width}
            for name, start, width in model.head_slices()
        ],
    }
    Path(path).write_text(json.dumps(doc))


@torch.no_grad()
def eval_forward(model: PoseRegressor, inputs: np.ndarray, norm_mean, norm_std) -> np.ndarray:
    """Eval-mode forward of one (rows, channels) input, returning the raw
    head vector; the reference for export parity checks."""
    model.eval()
    x = (np.asarray(inputs, dtype=np.float64) - norm_mean) / norm_std
    tensor = torch.from_numpy(x.T[None, :, :]).float()
    return model(tensor)[0].detach().double().numpy()
