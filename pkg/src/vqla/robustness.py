"""Robustness sweep: evaluate a model on corrupted copies of a dataset and
aggregate per-kind and per-severity means."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corruptions import ALL_KINDS, CorruptionSpec, corrupt, stable_frame_seed
from .dataio import QASample, Vocab
from .exceptions import ConfigError
from .metrics import MetricsReport
from .model import VQLAModel
from .training import evaluate


@dataclass
class RobustnessReport:
    kinds: list[str]
    severities: list[int]
    cells: dict[tuple[str, int], MetricsReport] = field(default_factory=dict)

    def per_kind(self) -> dict[str, dict[str, float]]:
        """Mean Acc/mIoU per corruption kind across severities."""
        table = {}
        for kind in self.kinds:
            reports = [self.cells[(kind, s)] for s in self.severities]
            table[kind] = {
                "accuracy": float(np.mean([r.accuracy for r in reports])),
                "f_score": float(np.mean([r.f_score for r in reports])),
                "miou": float(np.mean([r.miou for r in reports])),
            }
        return table

    def per_severity(self) -> dict[int, dict[str, float]]:
        """Mean Acc/mIoU per severity level across kinds."""
        table = {}
        for severity in self.severities:
            reports = [self.cells[(k, severity)] for k in self.kinds]
            table[severity] = {
                "accuracy": float(np.mean([r.accuracy for r in reports])),
                "f_score": float(np.mean([r.f_score for r in reports])),
                "miou": float(np.mean([r.miou for r in reports])),
            }
        return table

    def to_json(self) -> str:
        payload = {
            "kinds": self.kinds,
            "severities": self.severities,
            "cells": {
                f"{kind}/{severity}": json.loads(report.to_json())
                for (kind, severity), report in sorted(self.cells.items())
            },
            "per_kind": self.per_kind(),
            "per_severity": {str(k): v for k, v in self.per_severity().items()},
        }
        return json.dumps(payload, sort_keys=True)


def robustness_sweep(
    model: VQLAModel,
    samples: list[QASample],
    vocab: Vocab,
    kinds=None,
    severities=(1, 2, 3, 4, 5),
    seed: int = 0,
    batch_size: int = 64,
) -> RobustnessReport:
    """Corrupt every frame per (kind, severity) in memory and evaluate.

    Severity 0 cells evaluate the clean frames, so the identity column can
    be checked against a clean report.
    """
    kinds = list(kinds) if kinds is not None else list(ALL_KINDS)
    severities = list(severities)
    for kind in kinds:
        if kind not in ALL_KINDS:
            raise ConfigError(f"unknown corruption kind {kind!r}")
    report = RobustnessReport(kinds=kinds, severities=severities)
    for kind in kinds:
        for severity in severities:
            corrupted = []
            for sample in samples:
                spec = CorruptionSpec(kind, severity, stable_frame_seed(seed, sample.frame_id))
                corrupted.append(
                    QASample(
                        frame_id=sample.frame_id,
                        image=corrupt(sample.image, spec),
                        question=sample.question,
                        answer_class=sample.answer_class,
                        bbox=sample.bbox,
                    )
                )
            report.cells[(kind, severity)] = evaluate(
                model, corrupted, vocab, batch_size=batch_size
            )
    return report


def format_kind_table(report: RobustnessReport) -> str:
    """Aligned text table: one row per corruption kind."""
    rows = [f"{'kind':<16} {'acc':>8} {'f1':>8} {'miou':>8}"]
    for kind, stats in report.per_kind().items():
        rows.append(
            f"{kind:<16} {stats['accuracy']:>8.4f} {stats['f_score']:>8.4f} {stats['miou']:>8.4f}"
        )
    return "\n".join(rows)


def format_severity_table(report: RobustnessReport) -> str:
    """Aligned text table: one row per severity level."""
    rows = [f"{'severity':<10} {'acc':>8} {'f1':>8} {'miou':>8}"]
    for severity, stats in report.per_severity().items():
        rows.append(
            f"{severity:<10} {stats['accuracy']:>8.4f} {stats['f_score']:>8.4f} {stats['miou']:>8.4f}"
        )
    return "\n".join(rows)
