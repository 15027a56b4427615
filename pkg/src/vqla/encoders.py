"""Text and visual encoders producing matched (B, L, D) embedding sequences."""

from __future__ import annotations

import torch
import torch.nn as nn
from torch import Tensor

from .config import EncoderConfig
from .exceptions import ConfigError, ShapeError


class TextEmbedder(nn.Module):
    """Sum of token, positional and segment embeddings per question position."""

    def __init__(self, vocab_size: int, cfg: EncoderConfig):
        super().__init__()
        if vocab_size < 2:
            raise ConfigError("vocab_size must include pad and unk")
        self.token = nn.Embedding(vocab_size, cfg.dim)
        self.position = nn.Parameter(torch.zeros(cfg.text_len, cfg.dim))
        self.segment = nn.Parameter(torch.zeros(cfg.dim))
        nn.init.normal_(self.token.weight, std=0.02)
        nn.init.normal_(self.position, std=0.02)
        nn.init.normal_(self.segment, std=0.02)
        self.text_len = cfg.text_len

    def forward(self, token_ids: Tensor) -> Tensor:
        if token_ids.ndim != 2 or token_ids.shape[1] != self.text_len:
            raise ShapeError(f"expected (B, {self.text_len}) ids, got {tuple(token_ids.shape)}")
        if token_ids.max() >= self.token.num_embeddings or token_ids.min() < 0:
            raise IndexError("token id outside the embedding table")
        return self.token(token_ids) + self.position + self.segment


class VisualGridEncoder(nn.Module):
    """Convolutional features pooled to a G×G grid of D-dim tokens.

    All convolutions are stride-1 with circular padding and the pooling
    cells are non-overlapping, so rolling the image by exactly one cell
    permutes the grid tokens (before the positional term is added).
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        layers: list[nn.Module] = []
        channels = [3, *cfg.conv_channels]
        for c_in, c_out in zip(channels[:-1], channels[1:]):
            layers.append(nn.Conv2d(c_in, c_out, kernel_size=3, padding=1, padding_mode="circular"))
            layers.append(nn.ReLU())
        self.features = nn.Sequential(*layers)
        self.project = nn.Conv2d(channels[-1], cfg.dim, kernel_size=1)
        self.position = nn.Parameter(torch.zeros(cfg.visual_len, cfg.dim))
        self.segment = nn.Parameter(torch.zeros(cfg.dim))
        nn.init.normal_(self.position, std=0.02)
        nn.init.normal_(self.segment, std=0.02)
        self.grid = cfg.grid

    def forward(self, images: Tensor) -> Tensor:
        if images.ndim != 4 or images.shape[-1] != 3:
            raise ShapeError(f"expected (B, H, W, 3) images, got {tuple(images.shape)}")
        _, height, width, _ = images.shape
        if height % self.grid or width % self.grid:
            raise ConfigError(
                f"image size {height}x{width} not divisible by grid {self.grid}"
            )
        x = images.permute(0, 3, 1, 2)
        x = self.features(x)
        x = torch.nn.functional.avg_pool2d(
            x, kernel_size=(height // self.grid, width // self.grid)
        )
        x = self.project(x)  # (B, D, G, G)
        tokens = x.flatten(2).transpose(1, 2)  # row-major grid order
        return tokens + self.position + self.segment
