"""Configuration dataclasses for every pipeline stage, plus file parsing.

Config files are either flat ``key=value`` lines with dotted paths
(``loss.box=giou``) or a nested JSON object with the same structure.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .exceptions import ConfigError

ATTENTION_MODES = ("self", "guided", "co_T2V", "co_V2T", "co_Bi")
BOX_LOSSES = ("giou", "l1+giou", "iou", "diou", "ciou")
QA_LOSSES = ("ce", "focal")
SIGN_MODES = ("ascent", "paper_literal")


@dataclass
class EncoderConfig:
    dim: int = 128
    grid: int = 5
    text_len: int = 25
    conv_channels: tuple[int, ...] = (8, 16, 32, 64)
    extractor: str = "conv_small"  # slot for a pretrained drop-in

    @property
    def visual_len(self) -> int:
        return self.grid * self.grid

    def validate(self) -> None:
        if self.dim < 1 or self.grid < 1 or self.text_len < 1:
            raise ConfigError("dim, grid and text_len must be positive")
        if self.visual_len != self.text_len:
            raise ConfigError(
                "gated fusion needs matching sequence lengths: grid^2="
                f"{self.visual_len} but text_len={self.text_len}"
            )
        if not self.conv_channels:
            raise ConfigError("conv_channels must name at least one block")
        if self.extractor != "conv_small":
            raise ConfigError(f"unknown visual extractor {self.extractor!r}")


@dataclass
class FusionConfig:
    attn_heads: int = 8
    n_coattn_layers: int = 6
    attn_mode: str = "co_T2V"
    mcc_heads: int = 4
    gcc_heads: int = 4
    dropout: float = 0.1
    use_coattention: bool = True
    use_mcc: bool = True
    use_gcc: bool = True
    use_gate: bool = True

    def validate(self, dim: int) -> None:
        if self.attn_mode not in ATTENTION_MODES:
            raise ConfigError(f"unknown attn_mode {self.attn_mode!r}")
        if self.n_coattn_layers < 0:
            raise ConfigError("n_coattn_layers must be >= 0")
        for name, heads in (
            ("attn_heads", self.attn_heads),
            ("mcc_heads", self.mcc_heads),
            ("gcc_heads", self.gcc_heads),
        ):
            if heads < 1 or dim % heads != 0:
                raise ConfigError(f"dim={dim} not divisible by {name}={heads}")


@dataclass
class BackboneConfig:
    depth: int = 4
    heads: int = 4
    mlp_ratio: float = 4.0
    dropout: float = 0.1
    class_token: bool = True

    def validate(self, dim: int) -> None:
        if self.depth < 0:
            raise ConfigError("backbone depth must be >= 0")
        if self.heads < 1 or dim % self.heads != 0:
            raise ConfigError(f"dim={dim} not divisible by heads={self.heads}")


@dataclass
class LossConfig:
    box: str = "giou"
    qa: str = "focal"
    uncertainty: bool = True
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25

    def validate(self) -> None:
        if self.box not in BOX_LOSSES:
            raise ConfigError(f"unknown box loss {self.box!r}")
        if self.qa not in QA_LOSSES:
            raise ConfigError(f"unknown qa loss {self.qa!r}")


@dataclass
class AdversarialConfig:
    enabled: bool = True
    epsilon: float = 1e-2
    alpha: float = 1.0
    beta: float = 0.5
    temperature: float = 0.5
    sign_mode: str = "ascent"

    def validate(self) -> None:
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be >= 0")
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if self.sign_mode not in SIGN_MODES:
            raise ConfigError(f"unknown sign_mode {self.sign_mode!r}")


@dataclass
class TrainConfig:
    epochs: int = 80
    batch_size: int = 64
    lr: float = 1e-5
    seed: int = 0
    max_steps: int | None = None
    eval_interval: int | None = None  # steps; None = once per epoch
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    adversarial: AdversarialConfig = field(default_factory=AdversarialConfig)

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("epochs, batch_size and lr must be positive")
        self.encoder.validate()
        self.fusion.validate(self.encoder.dim)
        self.backbone.validate(self.encoder.dim)
        self.loss.validate()
        self.adversarial.validate()


def default_config() -> TrainConfig:
    return TrainConfig()


def tiny_config(seed: int = 0) -> TrainConfig:
    """Desk-scale configuration: small enough to overfit on a laptop CPU."""
    return TrainConfig(
        epochs=200,
        batch_size=16,
        lr=1e-3,
        seed=seed,
        encoder=EncoderConfig(dim=64, grid=4, text_len=16, conv_channels=(8, 16)),
        fusion=FusionConfig(attn_heads=4, n_coattn_layers=2),
        backbone=BackboneConfig(depth=2, heads=4, dropout=0.1),
    )


def _coerce(value: str, target_type: Any) -> Any:
    text = value.strip()
    if target_type is bool or isinstance(target_type, bool):
        lowered = text.lower()
        if lowered in ("1", "true", "on", "yes"):
            return True
        if lowered in ("0", "false", "off", "no"):
            return False
        raise ConfigError(f"cannot parse boolean from {text!r}")
    if target_type is int:
        return int(text)
    if target_type is float:
        return float(text)
    if target_type is tuple:
        return tuple(int(part) for part in text.split(",") if part.strip())
    return text


_FIELD_TYPES = {int: int, float: float, bool: bool, str: str}


def _set_dotted(cfg: TrainConfig, key: str, raw: str) -> None:
    obj: Any = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        if not hasattr(obj, part):
            raise ConfigError(f"unknown config section {part!r} in {key!r}")
        obj = getattr(obj, part)
    leaf = parts[-1]
    if not hasattr(obj, leaf):
        raise ConfigError(f"unknown config key {key!r}")
    current = getattr(obj, leaf)
    if isinstance(current, bool):
        target = bool
    elif isinstance(current, int):
        target = int
    elif isinstance(current, float):
        target = float
    elif isinstance(current, tuple):
        target = tuple
    else:
        target = str
    try:
        setattr(obj, leaf, _coerce(raw, target))
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def apply_overrides(cfg: TrainConfig, overrides: dict[str, str] | list[str]) -> TrainConfig:
    """Apply ``key=value`` overrides (dotted paths) in place and return cfg."""
    if isinstance(overrides, dict):
        items = overrides.items()
    else:
        pairs = []
        for entry in overrides:
            if "=" not in entry:
                raise ConfigError(f"override {entry!r} is not key=value")
            key, _, value = entry.partition("=")
            pairs.append((key.strip(), value))
        items = pairs
    for key, value in items:
        _set_dotted(cfg, key, str(value))
    return cfg


def config_to_dict(cfg: Any) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(data: dict) -> TrainConfig:
    cfg = TrainConfig()
    _merge_section(cfg, data)
    return cfg


def _merge_section(obj: Any, data: dict) -> None:
    for key, value in data.items():
        if not hasattr(obj, key):
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            _merge_section(current, value)
        elif isinstance(current, tuple) and isinstance(value, (list, tuple)):
            setattr(obj, key, tuple(value))
        else:
            setattr(obj, key, value)


def flatten_config(cfg: Any, prefix: str = "") -> dict[str, Any]:
    """Flatten a (possibly nested) config dataclass into dotted keys."""
    flat: dict[str, Any] = {}
    for fld in dataclasses.fields(cfg):
        value = getattr(cfg, fld.name)
        key = f"{prefix}{fld.name}"
        if dataclasses.is_dataclass(value):
            flat.update(flatten_config(value, prefix=f"{key}."))
        else:
            flat[key] = value
    return flat


def config_diff(a: TrainConfig, b: TrainConfig) -> dict[str, tuple[Any, Any]]:
    """Dotted keys whose values differ between two configs."""
    fa, fb = flatten_config(a), flatten_config(b)
    return {k: (fa[k], fb[k]) for k in fa if fa[k] != fb[k]}


def load_config(path: str | Path) -> TrainConfig:
    """Load a config file, accepting nested JSON or flat key=value lines."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
        return config_from_dict(data)
    cfg = TrainConfig()
    overrides = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        overrides.append(line)
    return apply_overrides(cfg, overrides)
