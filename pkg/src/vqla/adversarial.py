"""Sign-gradient embedding perturbation, contrastive regularization, and the
combined training step: clean pass, perturbed pass, and an NT-Xent term over
projected clean/perturbed features."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from .config import AdversarialConfig
from .exceptions import ConfigError, DegenerateBatchError
from .losses import VQLACriterion


def fgsm_perturb(
    embedding: Tensor, grad: Tensor, cfg: AdversarialConfig, modality: str
) -> Tensor:
    """Add r = s * w * epsilon * sign(grad); w is the per-modality weight.

    Ascent mode (s=+1) moves along the gradient to maximize the loss to
    first order; paper_literal (s=-1) keeps the printed minus sign.
    """
    if cfg.epsilon <= 0:
        raise ConfigError("epsilon must be > 0 to perturb")
    if grad.shape != embedding.shape:
        raise ConfigError("gradient and embedding shapes differ")
    if modality == "text":
        weight = cfg.alpha
    elif modality == "visual":
        weight = cfg.beta
    else:
        raise ConfigError(f"unknown modality {modality!r}")
    direction = 1.0 if cfg.sign_mode == "ascent" else -1.0
    return embedding + direction * weight * cfg.epsilon * torch.sign(grad)


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """Dot product over the product of norms; zero vectors score 0."""
    norm_a = torch.linalg.vector_norm(a)
    norm_b = torch.linalg.vector_norm(b)
    if float(norm_a) == 0.0 or float(norm_b) == 0.0:
        warnings.warn("cosine similarity of a zero vector defined as 0", stacklevel=2)
        return torch.zeros((), dtype=a.dtype, device=a.device)
    return (a * b).sum() / (norm_a * norm_b)


def contrastive_loss(clean: Tensor, perturbed: Tensor, temperature: float) -> Tensor:
    """Normalized temperature-scaled cross entropy over the 2B-example set.

    Each example's positive is its clean/perturbed partner; the denominator
    runs over every non-self example. The average covers all 2B anchors.
    """
    if temperature <= 0:
        raise ConfigError("temperature must be > 0")
    if clean.shape != perturbed.shape or clean.ndim != 2:
        raise ConfigError("clean and perturbed features must both be (B, d)")
    batch = clean.shape[0]
    if batch < 2:
        raise DegenerateBatchError("contrastive loss needs a batch of >= 2")
    z = F.normalize(torch.cat([clean, perturbed], dim=0), dim=1)
    sim = z @ z.T / temperature
    n = 2 * batch
    diag = torch.eye(n, dtype=torch.bool, device=sim.device)
    sim = sim.masked_fill(diag, float("-inf"))
    positives = torch.arange(n, device=sim.device).roll(batch)
    log_denominator = torch.logsumexp(sim, dim=1)
    log_numerator = sim[torch.arange(n, device=sim.device), positives]
    return (log_denominator - log_numerator).mean()


class ProjectionHead(nn.Module):
    """2-layer FFN mapping the class feature to the contrastive space."""

    def __init__(self, dim: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, dim)
        self.fc2 = nn.Linear(dim, dim // 2)

    def forward(self, feature: Tensor) -> Tensor:
        return self.fc2(torch.relu(self.fc1(feature)))


class VQLAObjective(nn.Module):
    """Criterion plus projection head: the trainable state beyond the model."""

    def __init__(self, loss_cfg, dim: int):
        super().__init__()
        self.criterion = VQLACriterion(loss_cfg)
        self.projection = ProjectionHead(dim)


@dataclass
class LossBundle:
    """Named step losses; ``total`` keeps its graph for the backward pass."""

    total: Tensor
    qa: float
    box: float
    contrastive: float
    qa_perturbed: float = 0.0
    box_perturbed: float = 0.0
    sigma_qa: float = 1.0
    sigma_box: float = 1.0


def adversarial_contrastive_step(
    model,
    objective: VQLAObjective,
    images: Tensor,
    token_ids: Tensor,
    target_classes: Tensor,
    target_boxes: Tensor,
    cfg: AdversarialConfig,
) -> LossBundle:
    """One training objective evaluation following the two-pass recipe.

    The clean loss gradients w.r.t. both modality embeddings drive the
    perturbation (held constant afterwards); the perturbed embeddings are
    re-fused and the projected clean/perturbed class features feed the
    contrastive term. With the strategy disabled the bundle holds just the
    clean loss.
    """
    cfg.validate()
    criterion = objective.criterion
    text_emb, visual_emb = model.embed(images, token_ids)
    output = model.fuse_and_predict(text_emb, visual_emb)
    loss_clean, qa_clean, box_clean = criterion(
        output.logits, output.boxes, target_classes, target_boxes
    )
    sigma_qa, sigma_box = (
        criterion.uncertainty.sigmas if criterion.uncertainty is not None else (1.0, 1.0)
    )
    if not cfg.enabled:
        return LossBundle(
            total=loss_clean,
            qa=float(qa_clean.detach()),
            box=float(box_clean.detach()),
            contrastive=0.0,
            sigma_qa=sigma_qa,
            sigma_box=sigma_box,
        )
    if images.shape[0] < 2:
        raise DegenerateBatchError("adversarial contrastive training needs batches of >= 2")
    if cfg.epsilon > 0:
        grad_text, grad_visual = torch.autograd.grad(
            loss_clean, (text_emb, visual_emb), retain_graph=True, create_graph=False
        )
        text_pert = fgsm_perturb(text_emb, grad_text, cfg, "text")
        visual_pert = fgsm_perturb(visual_emb, grad_visual, cfg, "visual")
    else:
        text_pert, visual_pert = text_emb, visual_emb
    output_pert = model.fuse_and_predict(text_pert, visual_pert)
    loss_pert, qa_pert, box_pert = criterion(
        output_pert.logits, output_pert.boxes, target_classes, target_boxes
    )
    projected_clean = objective.projection(output.class_feature)
    projected_pert = objective.projection(output_pert.class_feature)
    loss_ctr = contrastive_loss(projected_clean, projected_pert, cfg.temperature)
    return LossBundle(
        total=loss_clean + loss_pert + loss_ctr,
        qa=float(qa_clean.detach()),
        box=float(box_clean.detach()),
        contrastive=float(loss_ctr.detach()),
        qa_perturbed=float(qa_pert.detach()),
        box_perturbed=float(box_pert.detach()),
        sigma_qa=sigma_qa,
        sigma_box=sigma_box,
    )
