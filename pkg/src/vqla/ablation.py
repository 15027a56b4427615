"""Ablation grids. Each suite enumerates labelled config variants that
differ from the base config in exactly the knob(s) the row declares; the
runner trains and evaluates every cell at desk scale."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .config import TrainConfig, config_diff
from .exceptions import ConfigError

SUITES = (
    "loss_grid",
    "iou_grid",
    "attn_modes",
    "coattn_depth",
    "alpha_beta_grid",
    "module_knockout",
)

COATTN_DEPTHS = (2, 4, 6, 8, 10)
ALPHA_GRID = (0.5, 1.0, 2.0)
BETA_GRID = (0.1, 0.5, 1.0)


@dataclass
class AblationCell:
    label: str
    config: TrainConfig
    knobs: dict[str, object] = field(default_factory=dict)


def _variant(base: TrainConfig, label: str, knobs: dict[str, object]) -> AblationCell:
    cfg = copy.deepcopy(base)
    for dotted, value in knobs.items():
        obj = cfg
        parts = dotted.split(".")
        for part in parts[:-1]:
            obj = getattr(obj, part)
        setattr(obj, parts[-1], value)
    return AblationCell(label=label, config=cfg, knobs=knobs)


def ablation_grid(name: str, base: TrainConfig) -> list[AblationCell]:
    if name == "loss_grid":
        cells = []
        for box in ("giou", "l1+giou"):
            for qa in ("ce", "focal"):
                for uncertainty in (False, True):
                    label = f"{box}/{qa}/{'uncertainty' if uncertainty else 'plain'}"
                    cells.append(
                        _variant(
                            base,
                            label,
                            {
                                "loss.box": box,
                                "loss.qa": qa,
                                "loss.uncertainty": uncertainty,
                            },
                        )
                    )
        return cells
    if name == "iou_grid":
        return [
            _variant(base, box, {"loss.box": box}) for box in ("iou", "ciou", "diou", "giou")
        ]
    if name == "attn_modes":
        return [
            _variant(base, mode, {"fusion.attn_mode": mode})
            for mode in ("self", "guided", "co_Bi", "co_V2T", "co_T2V")
        ]
    if name == "coattn_depth":
        return [
            _variant(base, f"layers={n}", {"fusion.n_coattn_layers": n}) for n in COATTN_DEPTHS
        ]
    if name == "alpha_beta_grid":
        cells = [_variant(base, "w/o CTAS", {"adversarial.enabled": False})]
        for alpha in ALPHA_GRID:
            for beta in BETA_GRID:
                cells.append(
                    _variant(
                        base,
                        f"alpha={alpha}/beta={beta}",
                        {"adversarial.alpha": alpha, "adversarial.beta": beta},
                    )
                )
        return cells
    if name == "module_knockout":
        return [
            _variant(base, "w/o CA", {"fusion.use_coattention": False}),
            _variant(base, "w/o GF", {"fusion.use_gate": False}),
            _variant(base, "w/o MCC", {"fusion.use_mcc": False}),
            _variant(base, "w/o GCC", {"fusion.use_gcc": False}),
            _variant(
                base,
                "w/o C2G",
                {
                    "fusion.use_coattention": False,
                    "fusion.use_gate": False,
                    "fusion.use_mcc": False,
                    "fusion.use_gcc": False,
                },
            ),
        ]
    raise ConfigError(f"unknown ablation suite {name!r}; choose from {SUITES}")


def verify_grid(cells: list[AblationCell], base: TrainConfig) -> None:
    """Check each cell's config differs from base in exactly its knobs."""
    for cell in cells:
        changed = config_diff(base, cell.config)
        expected = {
            k for k, v in cell.knobs.items() if getattr_path(base, k) != v
        }
        if set(changed) != expected:
            raise ConfigError(
                f"ablation row {cell.label!r} changed {sorted(changed)} "
                f"but declared {sorted(expected)}"
            )


def getattr_path(obj, dotted: str):
    for part in dotted.split("."):
        obj = getattr(obj, part)
    return obj


def run_ablation(
    name: str,
    base: TrainConfig,
    train_samples,
    val_samples,
    question_vocab,
    answer_vocab,
) -> list[dict]:
    """Train and evaluate every cell; returns one result row per cell."""
    from .training import train

    cells = ablation_grid(name, base)
    verify_grid(cells, base)
    rows = []
    for cell in cells:
        result = train(cell.config, train_samples, val_samples, question_vocab, answer_vocab)
        report = result.final_report
        rows.append(
            {
                "label": cell.label,
                "knobs": {k: v for k, v in cell.knobs.items()},
                "accuracy": report.accuracy,
                "f_score": report.f_score,
                "miou": report.miou,
            }
        )
    return rows


def format_ablation_table(name: str, rows: list[dict]) -> str:
    lines = [f"suite: {name}", f"{'row':<28} {'acc':>8} {'f1':>8} {'miou':>8}"]
    for row in rows:
        lines.append(
            f"{row['label']:<28} {row['accuracy']:>8.4f} {row['f_score']:>8.4f} {row['miou']:>8.4f}"
        )
    return "\n".join(lines)
