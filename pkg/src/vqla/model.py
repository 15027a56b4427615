"""Transformer backbone over the fused sequence plus the two prediction heads."""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn
from torch import Tensor

from .config import BackboneConfig, TrainConfig, config_from_dict, config_to_dict
from .dataio import Vocab
from .encoders import TextEmbedder, VisualGridEncoder
from .exceptions import ConfigError
from .fusion import CalibratedFusion, MultiHeadAttention

CHECKPOINT_FORMAT = "vqla-checkpoint-v1"


class EncoderBlock(nn.Module):
    """Pre-norm transformer block."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, dropout)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(
            nn.Linear(dim, hidden),
            nn.GELU(),
            nn.Dropout(dropout),
            nn.Linear(hidden, dim),
            nn.Dropout(dropout),
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        y = self.norm1(x)
        x = x + self.dropout(self.attn(y, y, y))
        x = x + self.mlp(self.norm2(x))
        return x


class TransformerBackbone(nn.Module):
    """Pre-norm encoder with a learnable class token read by the heads.

    The positional table covers only the fused tokens, and depth 0 returns
    the class token untouched.
    """

    def __init__(self, dim: int, seq_len: int, cfg: BackboneConfig):
        super().__init__()
        cfg.validate(dim)
        self.class_token = nn.Parameter(torch.zeros(1, 1, dim))
        self.position = nn.Parameter(torch.zeros(1, seq_len, dim))
        nn.init.normal_(self.class_token, std=0.02)
        nn.init.normal_(self.position, std=0.02)
        self.blocks = nn.ModuleList(
            EncoderBlock(dim, cfg.heads, cfg.mlp_ratio, cfg.dropout) for _ in range(cfg.depth)
        )
        self.norm = nn.LayerNorm(dim)
        self.use_class_token = cfg.class_token

    def forward(self, fused: Tensor) -> tuple[Tensor, Tensor]:
        b = fused.shape[0]
        tokens = fused + self.position
        cls = self.class_token.expand(b, -1, -1)
        x = torch.cat([cls, tokens], dim=1)
        if not self.blocks:
            feature = x[:, 0] if self.use_class_token else x[:, 1:].mean(dim=1)
            return feature, x
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        feature = x[:, 0] if self.use_class_token else x[:, 1:].mean(dim=1)
        return feature, x


class ClassificationHead(nn.Module):
    """Single linear map to answer-class logits."""

    def __init__(self, dim: int, num_classes: int):
        super().__init__()
        self.fc = nn.Linear(dim, num_classes)

    def forward(self, feature: Tensor) -> Tensor:
        return self.fc(feature)


class LocalizationHead(nn.Module):
    """3-layer FFN with sigmoid-bounded (cx, cy, w, h) output."""

    def __init__(self, dim: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, dim)
        self.fc2 = nn.Linear(dim, dim)
        self.fc3 = nn.Linear(dim, 4)

    def forward(self, feature: Tensor) -> Tensor:
        x = torch.relu(self.fc1(feature))
        x = torch.relu(self.fc2(x))
        return torch.sigmoid(self.fc3(x))


class ModelOutput(NamedTuple):
    logits: Tensor  # (B, C)
    boxes: Tensor  # (B, 4) in (cx, cy, w, h), each in (0, 1)
    class_feature: Tensor  # (B, D)


class VQLAModel(nn.Module):
    """Encoders -> calibrated fusion -> backbone -> parallel heads."""

    def __init__(self, cfg: TrainConfig, vocab_size: int, num_classes: int):
        super().__init__()
        cfg.validate()
        if num_classes < 2:
            raise ConfigError("need at least two answer classes")
        self.cfg = cfg
        self.text_encoder = TextEmbedder(vocab_size, cfg.encoder)
        self.visual_encoder = VisualGridEncoder(cfg.encoder)
        self.fusion = CalibratedFusion(cfg.encoder.dim, cfg.fusion)
        self.backbone = TransformerBackbone(cfg.encoder.dim, cfg.encoder.text_len, cfg.backbone)
        self.classifier = ClassificationHead(cfg.encoder.dim, num_classes)
        self.localizer = LocalizationHead(cfg.encoder.dim)

    def embed(self, images: Tensor, token_ids: Tensor) -> tuple[Tensor, Tensor]:
        return self.text_encoder(token_ids), self.visual_encoder(images)

    def fuse_and_predict(self, text_emb: Tensor, visual_emb: Tensor) -> ModelOutput:
        fused = self.fusion(text_emb, visual_emb)
        feature, _ = self.backbone(fused)
        return ModelOutput(self.classifier(feature), self.localizer(feature), feature)

    def forward(self, images: Tensor, token_ids: Tensor) -> ModelOutput:
        text_emb, visual_emb = self.embed(images, token_ids)
        return self.fuse_and_predict(text_emb, visual_emb)


def save_checkpoint(
    path,
    model: VQLAModel,
    objective_state: dict,
    question_vocab: Vocab,
    answer_vocab: Vocab,
    extra: dict | None = None,
) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": config_to_dict(model.cfg),
        "question_vocab": question_vocab.id_to_token[2:],
        "answer_vocab": answer_vocab.id_to_token[2:],
        "model_state": model.state_dict(),
        "objective_state": objective_state,
        "extra": extra or {},
    }
    torch.save(payload, path)


class CheckpointBundle(NamedTuple):
    model: VQLAModel
    objective_state: dict
    question_vocab: Vocab
    answer_vocab: Vocab
    config: TrainConfig
    extra: dict


def load_checkpoint(path) -> CheckpointBundle:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"unsupported checkpoint format {payload.get('format')!r}")
    cfg = config_from_dict(payload["config"])
    question_vocab = Vocab(payload["question_vocab"])
    answer_vocab = Vocab(payload["answer_vocab"])
    model = VQLAModel(cfg, len(question_vocab), len(answer_vocab))
    model.load_state_dict(payload["model_state"])
    model.eval()
    return CheckpointBundle(
        model, payload["objective_state"], question_vocab, answer_vocab, cfg, payload["extra"]
    )
