"""Cross-modal fusion stack: co-attention interaction, cross-modal gate
calibration, global context calibration and gated fusion, applied in that
order on matched (B, L, D) sequences."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from .config import FusionConfig
from .exceptions import ConfigError, ShapeError


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention over h independent heads."""

    def __init__(self, dim: int, heads: int, dropout: float = 0.0):
        super().__init__()
        if heads < 1 or dim % heads != 0:
            raise ConfigError(f"dim={dim} not divisible by heads={heads}")
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = self.head_dim**-0.5
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, query: Tensor, key: Tensor, value: Tensor, return_weights: bool = False):
        if key.shape[1] != value.shape[1]:
            raise ShapeError("key and value lengths differ")
        if query.shape[-1] != key.shape[-1] or key.shape[-1] != value.shape[-1]:
            raise ShapeError("query/key/value feature dims differ")
        b, lq, _ = query.shape
        lk = key.shape[1]
        q = self.q_proj(query).view(b, lq, self.heads, self.head_dim).transpose(1, 2)
        k = self.k_proj(key).view(b, lk, self.heads, self.head_dim).transpose(1, 2)
        v = self.v_proj(value).view(b, lk, self.heads, self.head_dim).transpose(1, 2)
        weights = F.softmax(q @ k.transpose(-2, -1) * self.scale, dim=-1)
        out = self.dropout(weights) @ v
        out = out.transpose(1, 2).reshape(b, lq, self.heads * self.head_dim)
        out = self.out_proj(out)
        if return_weights:
            return out, weights
        return out


class AttentionBlock(nn.Module):
    """Post-norm attention sublayer with a width-4D feed-forward sublayer.

    Acts as self-attention when called without context; with context the
    queries come from ``x`` and keys/values from ``context``.
    """

    def __init__(self, dim: int, heads: int, mlp_ratio: float = 4.0, dropout: float = 0.0):
        super().__init__()
        self.attn = MultiHeadAttention(dim, heads, dropout)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.ffn = nn.Sequential(
            nn.Linear(dim, hidden),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(hidden, dim),
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor, context: Tensor | None = None) -> Tensor:
        source = x if context is None else context
        x = self.norm1(x + self.dropout(self.attn(x, source, source)))
        x = self.norm2(x + self.dropout(self.ffn(x)))
        return x


class CoAttentionLayer(nn.Module):
    """One interaction layer; the mode picks which blocks exist.

    co_* modes run per-modality self-attention first, then guide one (or
    both) modalities with the other; 'self' and 'guided' keep only the
    corresponding block kind.
    """

    def __init__(self, dim: int, heads: int, mode: str, mlp_ratio: float, dropout: float):
        super().__init__()
        self.mode = mode
        block = lambda: AttentionBlock(dim, heads, mlp_ratio, dropout)  # noqa: E731
        if mode in ("self", "co_T2V", "co_V2T", "co_Bi"):
            self.text_self = block()
            self.visual_self = block()
        if mode in ("guided", "co_T2V", "co_Bi"):
            self.text_to_visual = block()
        if mode in ("co_V2T", "co_Bi"):
            self.visual_to_text = block()

    def forward(self, text: Tensor, visual: Tensor) -> tuple[Tensor, Tensor]:
        if self.mode != "guided":
            text = self.text_self(text)
            visual = self.visual_self(visual)
        if self.mode == "co_Bi":
            # both guidances read the post-self states symmetrically
            new_visual = self.text_to_visual(visual, context=text)
            new_text = self.visual_to_text(text, context=visual)
            return new_text, new_visual
        if self.mode in ("guided", "co_T2V"):
            visual = self.text_to_visual(visual, context=text)
        elif self.mode == "co_V2T":
            text = self.visual_to_text(text, context=visual)
        return text, visual


class CoAttentionStack(nn.Module):
    """n_layers of cross-modal interaction; n_layers=0 is a passthrough."""

    def __init__(
        self,
        dim: int,
        heads: int,
        n_layers: int,
        mode: str = "co_T2V",
        mlp_ratio: float = 4.0,
        dropout: float = 0.0,
    ):
        super().__init__()
        if n_layers < 0:
            raise ConfigError("n_layers must be >= 0")
        self.layers = nn.ModuleList(
            CoAttentionLayer(dim, heads, mode, mlp_ratio, dropout) for _ in range(n_layers)
        )

    def forward(self, text: Tensor, visual: Tensor) -> tuple[Tensor, Tensor]:
        for layer in self.layers:
            text, visual = layer(text, visual)
        return text, visual


class CrossModalCalibration(nn.Module):
    """Calibrate a target sequence with per-head sigmoid gates from a source.

    Both inputs are projected and split into N heads; each target head is
    scaled elementwise by a gate computed from the matching source head,
    then the heads are recombined through FC -> LayerNorm -> ReLU.
    """

    def __init__(self, dim: int, heads: int, layer_norm: bool = True):
        super().__init__()
        if heads < 1 or dim % heads != 0:
            raise ConfigError(f"dim={dim} not divisible by calibration heads={heads}")
        self.heads = heads
        self.head_dim = dim // heads
        self.target_proj = nn.Linear(dim, dim)
        self.source_proj = nn.Linear(dim, dim)
        self.gate = nn.Linear(self.head_dim, self.head_dim)
        self.out = nn.Linear(dim, dim)
        self.norm = nn.LayerNorm(dim) if layer_norm else nn.Identity()

    def forward(self, target: Tensor, source: Tensor) -> Tensor:
        if target.shape != source.shape:
            raise ShapeError("target and source must share a shape")
        b, length, dim = target.shape
        t = self.target_proj(target).view(b, length, self.heads, self.head_dim)
        s = self.source_proj(source).view(b, length, self.heads, self.head_dim)
        gated = t * torch.sigmoid(self.gate(s))
        merged = gated.reshape(b, length, dim)
        return F.relu(self.norm(self.out(merged)))


class GlobalContextCalibration(nn.Module):
    """Per-head bilinear-pooling attention over positions, added residually.

    Each head scores positions with a learned vector over the elementwise
    product of two projections, pools a per-head context vector with the
    softmax weights, and the concatenated context (after FC/LayerNorm/ReLU
    /FC) is broadcast-added to every position of the input.
    """

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if heads < 1 or dim % heads != 0:
            raise ConfigError(f"dim={dim} not divisible by calibration heads={heads}")
        self.heads = heads
        self.head_dim = dim // heads
        self.query_map = nn.Linear(self.head_dim, self.head_dim)
        self.key_map = nn.Linear(self.head_dim, self.head_dim)
        self.value_map = nn.Linear(self.head_dim, self.head_dim)
        self.head_weights = nn.Parameter(torch.zeros(heads, self.head_dim))
        nn.init.normal_(self.head_weights, std=0.02)
        self.mix = nn.Linear(dim, dim)
        self.norm = nn.LayerNorm(dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x: Tensor, paired: Tensor | None = None) -> Tensor:
        other = x if paired is None else paired
        if other.shape != x.shape:
            raise ShapeError("paired input must share the input's shape")
        b, length, dim = x.shape
        xh = x.view(b, length, self.heads, self.head_dim)
        oh = other.view(b, length, self.heads, self.head_dim)
        product = self.query_map(xh) * self.key_map(oh)
        scores = torch.einsum("blnd,nd->bln", product, self.head_weights)
        attn = F.softmax(scores, dim=1)  # over positions
        context = torch.einsum("bln,blnd->bnd", attn, self.value_map(oh))
        context = context.reshape(b, dim)
        adjust = self.out(F.relu(self.norm(self.mix(context))))
        return x + adjust.unsqueeze(1)

    def attention_weights(self, x: Tensor, paired: Tensor | None = None) -> Tensor:
        other = x if paired is None else paired
        b, length, _ = x.shape
        xh = x.view(b, length, self.heads, self.head_dim)
        oh = other.view(b, length, self.heads, self.head_dim)
        product = self.query_map(xh) * self.key_map(oh)
        scores = torch.einsum("blnd,nd->bln", product, self.head_weights)
        return F.softmax(scores, dim=1)


class GatedFusion(nn.Module):
    """Convex per-element combination of tanh-encoded modality sequences."""

    def __init__(self, dim: int):
        super().__init__()
        self.gate = nn.Linear(2 * dim, dim)
        self.visual_map = nn.Linear(dim, dim)
        self.text_map = nn.Linear(dim, dim)

    def forward(self, visual: Tensor, text: Tensor, return_gate: bool = False):
        if visual.shape != text.shape:
            raise ShapeError("visual and text sequences must share a shape")
        k = torch.sigmoid(self.gate(torch.cat([visual, text], dim=-1)))
        fused = k * torch.tanh(self.visual_map(visual)) + (1 - k) * torch.tanh(
            self.text_map(text)
        )
        if return_gate:
            return fused, k
        return fused


class CalibratedFusion(nn.Module):
    """Full fusion pipeline; stage flags support the knockout ablations.

    With every stage disabled the output degrades to the fixed baseline
    0.5*(tanh(visual) + tanh(text)).
    """

    def __init__(self, dim: int, cfg: FusionConfig):
        super().__init__()
        cfg.validate(dim)
        self.cfg = cfg
        if cfg.use_coattention:
            self.coattention = CoAttentionStack(
                dim, cfg.attn_heads, cfg.n_coattn_layers, cfg.attn_mode, dropout=cfg.dropout
            )
        if cfg.use_mcc:
            self.visual_calibration = CrossModalCalibration(dim, cfg.mcc_heads)
            self.text_calibration = CrossModalCalibration(dim, cfg.mcc_heads)
        if cfg.use_gcc:
            self.visual_context = GlobalContextCalibration(dim, cfg.gcc_heads)
            self.text_context = GlobalContextCalibration(dim, cfg.gcc_heads)
        if cfg.use_gate:
            self.gate = GatedFusion(dim)

    def forward(self, text: Tensor, visual: Tensor) -> Tensor:
        if text.shape != visual.shape:
            raise ShapeError(
                f"text {tuple(text.shape)} and visual {tuple(visual.shape)} must match"
            )
        if self.cfg.use_coattention:
            text, visual = self.coattention(text, visual)
        if self.cfg.use_mcc:
            visual, text = (
                self.visual_calibration(visual, text),
                self.text_calibration(text, visual),
            )
        if self.cfg.use_gcc:
            visual = self.visual_context(visual)
            text = self.text_context(text)
        if self.cfg.use_gate:
            return self.gate(visual, text)
        return 0.5 * (torch.tanh(visual) + torch.tanh(text))
