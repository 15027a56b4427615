"""Classification, box-regression and multi-task combination losses.

Boxes everywhere are (..., 4) tensors in (cx, cy, w, h) form unless a
function name says corners; corner tensors are (x0, y0, x1, y1).
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from .config import LossConfig
from .exceptions import ConfigError

_EPS = 1e-12


def cross_entropy(logits: Tensor, targets: Tensor) -> Tensor:
    return F.cross_entropy(logits, targets)


def focal_loss(logits: Tensor, targets: Tensor, gamma: float = 2.0, alpha: float = 0.25) -> Tensor:
    """Mean of -alpha * (1 - p_t)^gamma * log(p_t) over the batch."""
    log_probs = F.log_softmax(logits, dim=-1)
    log_pt = log_probs.gather(1, targets.unsqueeze(1)).squeeze(1)
    pt = log_pt.exp()
    return (-alpha * (1 - pt) ** gamma * log_pt).mean()


def center_to_corners(boxes: Tensor) -> Tensor:
    cx, cy, w, h = boxes.unbind(-1)
    return torch.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], dim=-1)


def _areas(corners: Tensor) -> Tensor:
    return (corners[..., 2] - corners[..., 0]).clamp(min=0) * (
        corners[..., 3] - corners[..., 1]
    ).clamp(min=0)


def iou_corners(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise IoU of corner boxes; zero-area pairs score 0."""
    inter_w = (torch.min(a[..., 2], b[..., 2]) - torch.max(a[..., 0], b[..., 0])).clamp(min=0)
    inter_h = (torch.min(a[..., 3], b[..., 3]) - torch.max(a[..., 1], b[..., 1])).clamp(min=0)
    inter = inter_w * inter_h
    union = _areas(a) + _areas(b) - inter
    return torch.where(union > 0, inter / union.clamp(min=_EPS), torch.zeros_like(union))


def giou_corners(a: Tensor, b: Tensor) -> Tensor:
    """IoU minus the normalized empty area of the smallest enclosing box."""
    inter_w = (torch.min(a[..., 2], b[..., 2]) - torch.max(a[..., 0], b[..., 0])).clamp(min=0)
    inter_h = (torch.min(a[..., 3], b[..., 3]) - torch.max(a[..., 1], b[..., 1])).clamp(min=0)
    inter = inter_w * inter_h
    union = _areas(a) + _areas(b) - inter
    iou = torch.where(union > 0, inter / union.clamp(min=_EPS), torch.zeros_like(union))
    enclose_w = torch.max(a[..., 2], b[..., 2]) - torch.min(a[..., 0], b[..., 0])
    enclose_h = torch.max(a[..., 3], b[..., 3]) - torch.min(a[..., 1], b[..., 1])
    enclose = enclose_w.clamp(min=0) * enclose_h.clamp(min=0)
    penalty = torch.where(
        enclose > 0, (enclose - union) / enclose.clamp(min=_EPS), torch.zeros_like(enclose)
    )
    return iou - penalty


def diou_corners(a: Tensor, b: Tensor) -> Tensor:
    """IoU minus the squared center distance over the enclosing diagonal."""
    iou = iou_corners(a, b)
    ax = (a[..., 0] + a[..., 2]) / 2
    ay = (a[..., 1] + a[..., 3]) / 2
    bx = (b[..., 0] + b[..., 2]) / 2
    by = (b[..., 1] + b[..., 3]) / 2
    center_dist = (ax - bx) ** 2 + (ay - by) ** 2
    enclose_w = torch.max(a[..., 2], b[..., 2]) - torch.min(a[..., 0], b[..., 0])
    enclose_h = torch.max(a[..., 3], b[..., 3]) - torch.min(a[..., 1], b[..., 1])
    diagonal = enclose_w**2 + enclose_h**2
    return iou - center_dist / diagonal.clamp(min=_EPS)


def ciou_corners(a: Tensor, b: Tensor) -> Tensor:
    """DIoU with an aspect-ratio consistency penalty."""
    iou = iou_corners(a, b)
    diou = diou_corners(a, b)
    aw = (a[..., 2] - a[..., 0]).clamp(min=_EPS)
    ah = (a[..., 3] - a[..., 1]).clamp(min=_EPS)
    bw = (b[..., 2] - b[..., 0]).clamp(min=_EPS)
    bh = (b[..., 3] - b[..., 1]).clamp(min=_EPS)
    v = (4 / math.pi**2) * (torch.atan(bw / bh) - torch.atan(aw / ah)) ** 2
    trade_off = v / ((1 - iou) + v + _EPS)
    return diou - trade_off * v


def giou(pred: Tensor, gt: Tensor) -> Tensor:
    """GIoU value in (-1, 1] for center-form boxes."""
    return giou_corners(center_to_corners(pred), center_to_corners(gt))


def giou_loss(pred: Tensor, gt: Tensor) -> Tensor:
    return (1 - giou(pred, gt)).mean()


def l1_loss(pred: Tensor, gt: Tensor) -> Tensor:
    return (pred - gt).abs().sum(dim=-1).mean()


def box_loss(pred: Tensor, gt: Tensor, kind: str) -> Tensor:
    """Selected localization loss; kinds match the ablation CLI strings."""
    pc, gc = center_to_corners(pred), center_to_corners(gt)
    if kind == "giou":
        return (1 - giou_corners(pc, gc)).mean()
    if kind == "l1+giou":
        return (1 - giou_corners(pc, gc)).mean() + l1_loss(pred, gt)
    if kind == "iou":
        return (1 - iou_corners(pc, gc)).mean()
    if kind == "diou":
        return (1 - diou_corners(pc, gc)).mean()
    if kind == "ciou":
        return (1 - ciou_corners(pc, gc)).mean()
    raise ConfigError(f"unknown box loss {kind!r}")


def qa_loss(logits: Tensor, targets: Tensor, cfg: LossConfig) -> Tensor:
    if cfg.qa == "ce":
        return cross_entropy(logits, targets)
    if cfg.qa == "focal":
        return focal_loss(logits, targets, cfg.focal_gamma, cfg.focal_alpha)
    raise ConfigError(f"unknown qa loss {cfg.qa!r}")


def uncertainty_combine(
    loss_qa: Tensor, loss_box: Tensor, log_sigma_qa: Tensor, log_sigma_box: Tensor
) -> Tensor:
    """L_qa/(2*s1^2) + log s1 + L_box/(2*s2^2) + log s2 with s = exp(log s)."""
    inv_qa = torch.exp(-2 * log_sigma_qa)
    inv_box = torch.exp(-2 * log_sigma_box)
    return 0.5 * loss_qa * inv_qa + log_sigma_qa + 0.5 * loss_box * inv_box + log_sigma_box


def legacy_combine(loss_qa: Tensor, loss_box: Tensor) -> Tensor:
    """Unweighted sum used by the no-uncertainty ablation rows."""
    return loss_qa + loss_box


class UncertaintyWeighting(nn.Module):
    """Learnable per-task scales, stored as log sigma so they stay positive."""

    def __init__(self):
        super().__init__()
        self.log_sigma_qa = nn.Parameter(torch.zeros(()))
        self.log_sigma_box = nn.Parameter(torch.zeros(()))

    def forward(self, loss_qa: Tensor, loss_box: Tensor) -> Tensor:
        return uncertainty_combine(loss_qa, loss_box, self.log_sigma_qa, self.log_sigma_box)

    @property
    def sigmas(self) -> tuple[float, float]:
        return (
            float(self.log_sigma_qa.detach().exp()),
            float(self.log_sigma_box.detach().exp()),
        )


class VQLACriterion(nn.Module):
    """Configured answer + localization loss with optional uncertainty scales."""

    def __init__(self, cfg: LossConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.uncertainty = UncertaintyWeighting() if cfg.uncertainty else None

    def forward(
        self, logits: Tensor, boxes: Tensor, target_classes: Tensor, target_boxes: Tensor
    ) -> tuple[Tensor, Tensor, Tensor]:
        """Return (total, qa component, box component)."""
        qa = qa_loss(logits, target_classes, self.cfg)
        box = box_loss(boxes, target_boxes, self.cfg.box)
        if self.uncertainty is not None:
            return self.uncertainty(qa, box), qa, box
        return legacy_combine(qa, box), qa, box
