"""Multi-task pose loss with learned per-task uncertainty weights.

Each head contributes exp(-s_j) * L_j + s_j where s_j is a learnable
log-variance; the optimum of each weight sits at s_j = log L_j, so the
weighting self-balances the rotation, translation, and scale terms without
manual tuning.  Rotation uses the geodesic angle (after orthonormalizing
the 6D output, or from the quaternion dot product), translation the L2
distance, scale the relative L1 error.
"""

from __future__ import annotations

import torch
from torch import nn

from .model import quaternion_to_matrix, sixd_to_matrix


def geodesic_angle(rot_a: torch.Tensor, rot_b: torch.Tensor) -> torch.Tensor:
    """Rotation angle between matrix batches, radians."""
    trace = torch.einsum("bij,bij->b", rot_a, rot_b)
    return torch.acos(torch.clamp((trace - 1.0) / 2.0, -1.0 + 1e-7, 1.0 - 1e-7))


def rotation_loss_quaternion(pred_q: torch.Tensor, gt_q: torch.Tensor) -> torch.Tensor:
    """Geodesic angle from the quaternion dot product (sign-free)."""
    pred = nn.functional.normalize(pred_q, dim=1)
    dot = torch.abs((pred * gt_q).sum(dim=1))
    return 2.0 * torch.acos(torch.clamp(dot, max=1.0 - 1e-7))


def rotation_loss_6d(pred_6d: torch.Tensor, gt_q: torch.Tensor) -> torch.Tensor:
    return geodesic_angle(sixd_to_matrix(pred_6d), quaternion_to_matrix(gt_q))


def translation_loss(pred_t: torch.Tensor, gt_t: torch.Tensor) -> torch.Tensor:
    return torch.linalg.norm(pred_t - gt_t, dim=1)


def scale_loss(pred_log_s: torch.Tensor, gt_s: torch.Tensor) -> torch.Tensor:
    """Relative L1 on the decoded (exponentiated) scale."""
    return torch.abs(torch.exp(pred_log_s) - gt_s) / gt_s


class UncertaintyWeightedLoss(nn.Module):
    """sum_j exp(-s_j) L_j + s_j over the task losses present."""

    def __init__(self, task_names):
        super().__init__()
        self.task_names = tuple(task_names)
        self.log_vars = nn.Parameter(torch.zeros(len(self.task_names)))

    def forward(self, task_losses: dict) -> torch.Tensor:
        total = 0.0
        for i, name in enumerate(self.task_names):
            total = total + torch.exp(-self.log_vars[i]) * task_losses[name].mean() + self.log_vars[i]
        return total


def uncertainty_weighted_sum(losses: torch.Tensor, log_vars: torch.Tensor) -> torch.Tensor:
    """Functional form for tests: sum exp(-s_j) L_j + s_j."""
    return (torch.exp(-log_vars) * losses + log_vars).sum()
