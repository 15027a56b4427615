"""Answering/localization metrics and the serializable evaluation report."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .exceptions import EvaluationError
from .losses import center_to_corners, iou_corners

QUESTION_TYPES = ("attribute", "state", "location", "identity")


def question_type(question: str) -> str:
    """Coarse question category (surgical tissue/action/location/instrument
    analogue); identity is the fallback."""
    text = question.lower()
    if text.startswith("where") or "quadrant" in text:
        return "location"
    if "color" in text and "which shape" not in text:
        return "attribute"
    if text.startswith(("is ", "how big", "what size")):
        return "state"
    return "identity"


def accuracy(predictions, references) -> float:
    predictions, references = _check_lengths(predictions, references)
    return float(np.mean(predictions == references))


def macro_f1(predictions, references) -> float:
    """Macro-averaged F1 over the classes present in the references."""
    predictions, references = _check_lengths(predictions, references)
    scores = []
    for cls in np.unique(references):
        tp = float(np.sum((predictions == cls) & (references == cls)))
        fp = float(np.sum((predictions == cls) & (references != cls)))
        fn = float(np.sum((predictions != cls) & (references == cls)))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


def mean_iou(pred_boxes, ref_boxes) -> float:
    """Mean IoU between paired center-form boxes."""
    pred = torch.as_tensor(np.asarray(pred_boxes), dtype=torch.float64)
    ref = torch.as_tensor(np.asarray(ref_boxes), dtype=torch.float64)
    if pred.shape != ref.shape or pred.ndim != 2 or pred.shape[1] != 4:
        raise EvaluationError("box arrays must both be (N, 4)")
    if pred.shape[0] == 0:
        raise EvaluationError("cannot evaluate an empty box set")
    values = iou_corners(center_to_corners(pred), center_to_corners(ref))
    return float(values.mean())


def _check_lengths(predictions, references):
    predictions = np.asarray(predictions)
    references = np.asarray(references)
    if predictions.shape != references.shape:
        raise EvaluationError("prediction and reference lengths differ")
    if predictions.size == 0:
        raise EvaluationError("cannot evaluate an empty prediction set")
    return predictions, references


@dataclass
class TypeBreakdown:
    count: int
    accuracy: float
    f_score: float
    miou: float


@dataclass
class MetricsReport:
    accuracy: float
    f_score: float
    miou: float
    sample_count: int
    per_type: dict[str, TypeBreakdown] = field(default_factory=dict)

    def validate(self) -> None:
        for name, value in (
            ("accuracy", self.accuracy),
            ("f_score", self.f_score),
            ("miou", self.miou),
        ):
            if not 0.0 <= value <= 1.0:
                raise EvaluationError(f"{name}={value} outside [0, 1]")
        if sum(b.count for b in self.per_type.values()) != self.sample_count:
            raise EvaluationError("per-type counts do not sum to the sample count")

    def to_json(self) -> str:
        payload = {
            "accuracy": self.accuracy,
            "f_score": self.f_score,
            "miou": self.miou,
            "sample_count": self.sample_count,
            "per_type": {
                name: {
                    "count": b.count,
                    "accuracy": b.accuracy,
                    "f_score": b.f_score,
                    "miou": b.miou,
                }
                for name, b in self.per_type.items()
            },
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        data = json.loads(text)
        per_type = {
            name: TypeBreakdown(**values) for name, values in data.get("per_type", {}).items()
        }
        return cls(
            accuracy=data["accuracy"],
            f_score=data["f_score"],
            miou=data["miou"],
            sample_count=data["sample_count"],
            per_type=per_type,
        )


def compute_report(pred_classes, ref_classes, pred_boxes, ref_boxes, qtypes) -> MetricsReport:
    pred_classes = np.asarray(pred_classes)
    ref_classes = np.asarray(ref_classes)
    qtypes = list(qtypes)
    if not (len(pred_classes) == len(ref_classes) == len(pred_boxes) == len(qtypes)):
        raise EvaluationError("metric inputs must share a length")
    report = MetricsReport(
        accuracy=accuracy(pred_classes, ref_classes),
        f_score=macro_f1(pred_classes, ref_classes),
        miou=mean_iou(pred_boxes, ref_boxes),
        sample_count=len(pred_classes),
    )
    pred_boxes = np.asarray(pred_boxes)
    ref_boxes = np.asarray(ref_boxes)
    for kind in sorted(set(qtypes)):
        index = np.array([i for i, q in enumerate(qtypes) if q == kind])
        report.per_type[kind] = TypeBreakdown(
            count=int(index.size),
            accuracy=accuracy(pred_classes[index], ref_classes[index]),
            f_score=macro_f1(pred_classes[index], ref_classes[index]),
            miou=mean_iou(pred_boxes[index], ref_boxes[index]),
        )
    report.validate()
    return report
