"""Training/evaluation loop and the inference-speed probe."""

from __future__ import annotations

import copy
import platform
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import torch

from .adversarial import VQLAObjective, adversarial_contrastive_step
from .config import TrainConfig
from .dataio import QASample, Vocab, tokenize
from .exceptions import EvaluationError, MeasurementError, TrainingError
from .metrics import MetricsReport, compute_report, question_type
from .model import VQLAModel


class TensorBatch(NamedTuple):
    images: torch.Tensor  # (B, H, W, 3) float32
    token_ids: torch.Tensor  # (B, L) long
    classes: torch.Tensor  # (B,) long
    boxes: torch.Tensor  # (B, 4) float32
    frame_ids: tuple[str, ...]
    qtypes: tuple[str, ...]


def make_batch(samples: list[QASample], vocab: Vocab, text_len: int) -> TensorBatch:
    images = torch.from_numpy(np.stack([s.image for s in samples])).float()
    ids = torch.tensor([tokenize(s.question, vocab, text_len) for s in samples], dtype=torch.long)
    classes = torch.tensor([s.answer_class for s in samples], dtype=torch.long)
    boxes = torch.tensor([s.bbox.as_tuple() for s in samples], dtype=torch.float32)
    return TensorBatch(
        images,
        ids,
        classes,
        boxes,
        tuple(s.frame_id for s in samples),
        tuple(question_type(s.question) for s in samples),
    )


def iter_batches(samples, vocab, text_len, batch_size, generator=None):
    """Seeded shuffled batches; a trailing singleton batch is dropped."""
    if generator is None:
        order = list(range(len(samples)))
    else:
        order = torch.randperm(len(samples), generator=generator).tolist()
    for start in range(0, len(order), batch_size):
        chunk = [samples[i] for i in order[start : start + batch_size]]
        if len(chunk) == 1 and len(samples) > 1:
            continue
        yield make_batch(chunk, vocab, text_len)


@dataclass
class TrainResult:
    model: VQLAModel
    objective: VQLAObjective
    history: list[dict] = field(default_factory=list)
    best_val_accuracy: float = 0.0
    steps: int = 0
    final_report: MetricsReport | None = None


def train(
    cfg: TrainConfig,
    train_samples: list[QASample],
    val_samples: list[QASample],
    question_vocab: Vocab,
    answer_vocab: Vocab,
) -> TrainResult:
    """Run the adversarial-contrastive objective over the training set.

    Deterministic given cfg.seed; checkpoints the state with the best clean
    validation accuracy and restores it before returning. A non-finite loss
    aborts with the offending frame ids attached.
    """
    cfg.validate()
    if not train_samples:
        raise TrainingError("empty training set")
    torch.manual_seed(cfg.seed)
    model = VQLAModel(cfg, vocab_size=len(question_vocab), num_classes=len(answer_vocab))
    objective = VQLAObjective(cfg.loss, cfg.encoder.dim)
    optimizer = torch.optim.Adam(
        list(model.parameters()) + list(objective.parameters()), lr=cfg.lr
    )
    shuffle_rng = torch.Generator().manual_seed(cfg.seed)
    result = TrainResult(model=model, objective=objective)
    best_state = None
    step = 0
    done = False
    for epoch in range(cfg.epochs):
        model.train()
        for batch in iter_batches(
            train_samples, question_vocab, cfg.encoder.text_len, cfg.batch_size, shuffle_rng
        ):
            bundle = adversarial_contrastive_step(
                model,
                objective,
                batch.images,
                batch.token_ids,
                batch.classes,
                batch.boxes,
                cfg.adversarial,
            )
            if not torch.isfinite(bundle.total):
                raise TrainingError(
                    f"non-finite loss at step {step}",
                    diagnostics={"frame_ids": batch.frame_ids, "step": step},
                )
            optimizer.zero_grad()
            bundle.total.backward()
            optimizer.step()
            step += 1
            result.history.append(
                {
                    "step": step,
                    "total": float(bundle.total),
                    "qa": bundle.qa,
                    "box": bundle.box,
                    "contrastive": bundle.contrastive,
                    "sigma_qa": bundle.sigma_qa,
                    "sigma_box": bundle.sigma_box,
                }
            )
            if cfg.eval_interval and step % cfg.eval_interval == 0:
                best_state = _maybe_checkpoint(
                    model, objective, val_samples, question_vocab, cfg, result, best_state
                )
            if cfg.max_steps is not None and step >= cfg.max_steps:
                done = True
                break
        if not cfg.eval_interval:
            best_state = _maybe_checkpoint(
                model, objective, val_samples, question_vocab, cfg, result, best_state
            )
        if done:
            break
    result.steps = step
    if best_state is not None:
        model.load_state_dict(best_state["model"])
        objective.load_state_dict(best_state["objective"])
    result.final_report = evaluate(
        model, val_samples, question_vocab, cfg.encoder.text_len, cfg.batch_size
    )
    return result


def _maybe_checkpoint(model, objective, val_samples, vocab, cfg, result, best_state):
    if not val_samples:
        return best_state
    report = evaluate(model, val_samples, vocab, cfg.encoder.text_len, cfg.batch_size)
    if best_state is None or report.accuracy > result.best_val_accuracy:
        result.best_val_accuracy = report.accuracy
        return {
            "model": copy.deepcopy(model.state_dict()),
            "objective": copy.deepcopy(objective.state_dict()),
        }
    return best_state


@torch.no_grad()
def evaluate(
    model: VQLAModel,
    samples: list[QASample],
    vocab: Vocab,
    text_len: int | None = None,
    batch_size: int = 64,
) -> MetricsReport:
    """Eval-mode inference over a sample list with a per-type breakdown."""
    if not samples:
        raise EvaluationError("cannot evaluate an empty sample list")
    text_len = text_len or model.cfg.encoder.text_len
    was_training = model.training
    model.eval()
    pred_classes, ref_classes, pred_boxes, ref_boxes, qtypes = [], [], [], [], []
    for start in range(0, len(samples), batch_size):
        batch = make_batch(samples[start : start + batch_size], vocab, text_len)
        output = model(batch.images, batch.token_ids)
        pred_classes.extend(output.logits.argmax(dim=1).tolist())
        ref_classes.extend(batch.classes.tolist())
        pred_boxes.extend(output.boxes.tolist())
        ref_boxes.extend(batch.boxes.tolist())
        qtypes.extend(batch.qtypes)
    if was_training:
        model.train()
    return compute_report(pred_classes, ref_classes, pred_boxes, ref_boxes, qtypes)


@dataclass
class FpsReport:
    fps: float
    n_iters: int
    hardware: str

    def to_dict(self) -> dict:
        return {"fps": self.fps, "n_iters": self.n_iters, "hardware": self.hardware}


@torch.no_grad()
def measure_fps(model: VQLAModel, sample: QASample, vocab: Vocab, n_iters: int) -> FpsReport:
    """Single-stream frames/second from the median per-frame wall time.

    Reported, never thresholded: the number is hardware-dependent.
    """
    if n_iters < 1:
        raise MeasurementError("n_iters must be >= 1")
    model.eval()
    batch = make_batch([sample], vocab, model.cfg.encoder.text_len)
    for _ in range(min(10, n_iters)):  # warmup
        model(batch.images, batch.token_ids)
    times = []
    for _ in range(n_iters):
        start = time.perf_counter()
        model(batch.images, batch.token_ids)
        times.append(time.perf_counter() - start)
    median = float(np.median(times))
    hardware = f"{platform.platform()} / {platform.processor() or 'unknown cpu'} / torch {torch.__version__} ({torch.get_num_threads()} threads)"
    return FpsReport(fps=1.0 / max(median, 1e-9), n_iters=n_iters, hardware=hardware)
