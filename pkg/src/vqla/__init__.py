"""Visual question localized answering: joint answer classification and
bounding-box localization with calibrated cross-modal fusion, adversarial
contrastive training, and a corruption-robustness harness."""

__version__ = "0.1.0"

from .config import (
    AdversarialConfig,
    BackboneConfig,
    EncoderConfig,
    FusionConfig,
    LossConfig,
    TrainConfig,
    default_config,
    tiny_config,
)
from .dataio import (
    BBox,
    DatasetManifest,
    QASample,
    SyntheticConfig,
    Vocab,
    build_vocabs,
    generate_synthetic,
    load_manifest,
    load_samples,
    tokenize,
)
from .metrics import MetricsReport, compute_report
from .model import VQLAModel, load_checkpoint, save_checkpoint
from .training import evaluate, measure_fps, train

__all__ = [
    "AdversarialConfig",
    "BBox",
    "BackboneConfig",
    "DatasetManifest",
    "EncoderConfig",
    "FusionConfig",
    "LossConfig",
    "MetricsReport",
    "QASample",
    "SyntheticConfig",
    "TrainConfig",
    "VQLAModel",
    "Vocab",
    "build_vocabs",
    "compute_report",
    "default_config",
    "evaluate",
    "generate_synthetic",
    "load_checkpoint",
    "load_manifest",
    "load_samples",
    "measure_fps",
    "save_checkpoint",
    "tiny_config",
    "tokenize",
    "train",
]
