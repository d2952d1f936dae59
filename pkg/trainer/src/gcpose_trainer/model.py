"""Pose regression network: pointwise conv encoder, set pooling, linear heads.

Width-1 1D convolutions over the correspondence axis (each followed by
batch normalization and ReLU) encode correspondences independently; global
average pooling makes the network a set function; fully connected layers
map the pooled feature to the concatenated head vector.  Heads are slices
of the final layer: quaternion (4) for the absolute-pose regressor,
rotation6d (6) + translation (3) + log-scale (1) for relative pose and
scale.  The layout mirrors the portable weight format the solver package
reads, so export is a direct translation.
"""

from __future__ import annotations

import torch
from torch import nn

HEADS = {
    "upnp": (("quaternion", 4),),
    "grps": (("rotation6d", 6), ("translation", 3), ("scale", 1)),
}

DEFAULT_CONV_WIDTHS = {
    "upnp": (64, 128, 128, 64),
    "grps": (64, 64, 128, 128, 128, 256, 256, 128, 128, 64, 64),
}


class PoseRegressor(nn.Module):
    def __init__(self, kind: str, in_channels: int, conv_widths=None, fc_widths=()):
        super().__init__()
        if kind not in HEADS:
            raise ValueError(f"unknown problem kind {kind!r}")
        self.kind = kind
        self.in_channels = in_channels
        self.head_specs = HEADS[kind]
        conv_widths = tuple(conv_widths or DEFAULT_CONV_WIDTHS[kind])
        out_width = sum(width for _, width in self.head_specs)
        convs = []
        prev = in_channels
        for width in conv_widths:
            convs.append(nn.Conv1d(prev, width, kernel_size=1))
            convs.append(nn.BatchNorm1d(width))
            convs.append(nn.ReLU())
            prev = width
        self.encoder = nn.Sequential(*convs)
        fcs = []
        for width in fc_widths:
            fcs.append(nn.Linear(prev, width))
            fcs.append(nn.ReLU())
            prev = width
        fcs.append(nn.Linear(prev, out_width))
        self.head = nn.Sequential(*fcs)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: (batch, channels, rows) normalized inputs -> head vector."""
        feat = self.encoder(x).mean(dim=2)
        return self.head(feat)

    def head_slices(self):
        start = 0
        for name, width in self.head_specs:
            yield name, start, width
            start += width


def sixd_to_matrix(six: torch.Tensor) -> torch.Tensor:
    """Differentiable orthonormalization of a (batch, 6) representation."""
    a1, a2 = six[:, :3], six[:, 3:]
    b1 = nn.functional.normalize(a1, dim=1)
    a2_perp = a2 - (b1 * a2).sum(dim=1, keepdim=True) * b1
    b2 = nn.functional.normalize(a2_perp, dim=1)
    b3 = torch.cross(b1, b2, dim=1)
    return torch.stack([b1, b2, b3], dim=2)


def quaternion_to_matrix(q: torch.Tensor) -> torch.Tensor:
    """(batch, 4) unit-normalized scalar-first quaternions to matrices."""
    q = nn.functional.normalize(q, dim=1)
    w, x, y, z = q.unbind(dim=1)
    return torch.stack(
        [
            torch.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], dim=1),
            torch.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], dim=1),
            torch.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], dim=1),
        ],
        dim=1,
    )
