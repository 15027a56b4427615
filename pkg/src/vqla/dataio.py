"""Dataset model, manifest I/O, vocabularies and a synthetic scene generator.

Manifest format: a ``size W H`` header line, then one record per line::

    size 80 80
    images/train_00000.png | what color is the circle | red | 12 20 34 47

Fields are pipe-separated; the box is pixel-space corners
``x_min y_min x_max y_max``. Derived manifests may append two extra fields
recording a corruption kind and severity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import ConfigError, GenerationError, IntegrityError, ManifestError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_WORD_RE = re.compile(r"[a-z0-9]+")


def normalize_words(text: str) -> list[str]:
    """Lowercased, punctuation-stripped word tokens."""
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class BBox:
    """Normalized (cx, cy, w, h) box; corners implied as cx±w/2, cy±h/2."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name, value in (("cx", self.cx), ("cy", self.cy), ("w", self.w), ("h", self.h)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"BBox.{name}={value} outside [0, 1]")
        if self.w <= 0 or self.h <= 0:
            raise ValueError("BBox must have positive width and height")

    @classmethod
    def from_pixel_corners(
        cls, x0: float, y0: float, x1: float, y1: float, width: int, height: int
    ) -> "BBox":
        """Normalize pixel corners, clipping to the image bounds on load."""
        x0, x1 = sorted((x0, x1))
        y0, y1 = sorted((y0, y1))
        x0 = min(max(x0, 0.0), width)
        x1 = min(max(x1, 0.0), width)
        y0 = min(max(y0, 0.0), height)
        y1 = min(max(y1, 0.0), height)
        if x1 <= x0 or y1 <= y0:
            raise ValueError(f"degenerate pixel box ({x0}, {y0}, {x1}, {y1})")
        return cls(
            cx=(x0 + x1) / (2 * width),
            cy=(y0 + y1) / (2 * height),
            w=(x1 - x0) / width,
            h=(y1 - y0) / height,
        )

    def to_pixel_corners(self, width: int, height: int) -> tuple[float, float, float, float]:
        return (
            (self.cx - self.w / 2) * width,
            (self.cy - self.h / 2) * height,
            (self.cx + self.w / 2) * width,
            (self.cy + self.h / 2) * height,
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)


@dataclass
class ManifestRecord:
    frame_id: str
    question: str
    answer: str
    box_pixels: tuple[float, float, float, float]  # x0, y0, x1, y1
    corruption: tuple[str, int] | None = None


@dataclass
class DatasetManifest:
    split: str
    image_size: tuple[int, int]  # (W, H)
    records: list[ManifestRecord]
    root: Path | None = None

    def __len__(self) -> int:
        return len(self.records)

    def frame_ids(self) -> set[str]:
        return {r.frame_id for r in self.records}


@dataclass
class QASample:
    """One frame + question + answer class + ground-truth box."""

    frame_id: str
    image: np.ndarray  # H×W×3 float32 in [0, 1]
    question: str
    answer_class: int
    bbox: BBox

    def validate(self, num_classes: int | None = None) -> None:
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"image must be H×W×3, got {self.image.shape}")
        if self.image.min() < 0 or self.image.max() > 1:
            raise ValueError("image values must lie in [0, 1]")
        if num_classes is not None and not 0 <= self.answer_class < num_classes:
            raise ValueError(f"answer_class {self.answer_class} out of range")


class Vocab:
    """Token-id bijection with fixed pad (0) and unk (1) slots."""

    def __init__(self, tokens: list[str]):
        self.id_to_token = [PAD_TOKEN, UNK_TOKEN, *tokens]
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ConfigError("duplicate tokens in vocabulary")
        self.pad_id = 0
        self.unk_id = 1

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)

    def token(self, token_id: int) -> str:
        return self.id_to_token[token_id]

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.id_to_token == other.id_to_token


def build_vocabs(question_corpus, answer_corpus) -> tuple[Vocab, Vocab]:
    """Word-level question vocab and label-level answer vocab.

    Ids follow first-occurrence order over the corpus; questions are split
    into normalized words while each answer string is one label.
    """
    questions = list(question_corpus)
    answers = list(answer_corpus)
    if not questions or not answers:
        raise ConfigError("cannot build vocabularies from an empty corpus")
    seen: dict[str, None] = {}
    for question in questions:
        for word in normalize_words(question):
            seen.setdefault(word, None)
    labels: dict[str, None] = {}
    for answer in answers:
        labels.setdefault(" ".join(normalize_words(answer)), None)
    return Vocab(list(seen)), Vocab(list(labels))


def tokenize(question: str, vocab: Vocab, max_len: int) -> list[int]:
    """Encode to exactly ``max_len`` ids: truncate or right-pad with pad_id."""
    if max_len < 1:
        raise ConfigError("max_len must be >= 1")
    ids = [vocab.lookup(word) for word in normalize_words(question)]
    ids = ids[:max_len]
    ids.extend([vocab.pad_id] * (max_len - len(ids)))
    return ids


def detokenize(ids, vocab: Vocab) -> str:
    return " ".join(vocab.token(i) for i in ids if i != vocab.pad_id)


def encode_answer(answer: str, vocab: Vocab) -> int:
    return vocab.lookup(" ".join(normalize_words(answer)))


# ---------------------------------------------------------------------------
# Manifest I/O


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    lines = path.read_text().splitlines()
    image_size = None
    records: list[ManifestRecord] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if image_size is None:
            parts = line.split()
            if len(parts) != 3 or parts[0] != "size":
                raise ManifestError("expected header 'size W H'", lineno)
            try:
                image_size = (int(parts[1]), int(parts[2]))
            except ValueError:
                raise ManifestError(f"bad image size {line!r}", lineno) from None
            if image_size[0] < 1 or image_size[1] < 1:
                raise ManifestError(f"bad image size {line!r}", lineno)
            continue
        fields = [f.strip() for f in line.split("|")]
        if len(fields) not in (4, 6):
            raise ManifestError(f"expected 4 or 6 pipe-separated fields, got {len(fields)}", lineno)
        frame_id, question, answer, box_text = fields[:4]
        if not frame_id or not question or not answer:
            raise ManifestError("empty frame, question or answer field", lineno)
        box_parts = box_text.split()
        if len(box_parts) != 4:
            raise ManifestError(f"box needs 4 numbers, got {box_text!r}", lineno)
        try:
            box = tuple(float(v) for v in box_parts)
        except ValueError:
            raise ManifestError(f"non-numeric box {box_text!r}", lineno) from None
        if box[2] <= box[0] or box[3] <= box[1]:
            raise ManifestError(f"degenerate box {box_text!r}", lineno)
        corruption = None
        if len(fields) == 6:
            try:
                corruption = (fields[4], int(fields[5]))
            except ValueError:
                raise ManifestError(f"bad corruption severity {fields[5]!r}", lineno) from None
        records.append(ManifestRecord(frame_id, question, answer, box, corruption))
    if image_size is None:
        raise ManifestError("manifest has no size header", 1)
    return DatasetManifest(split=path.stem, image_size=image_size, records=records, root=path.parent)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    lines = [f"size {manifest.image_size[0]} {manifest.image_size[1]}"]
    for rec in manifest.records:
        box = " ".join(_format_number(v) for v in rec.box_pixels)
        parts = [rec.frame_id, rec.question, rec.answer, box]
        if rec.corruption is not None:
            parts.extend([rec.corruption[0], str(rec.corruption[1])])
        lines.append(" | ".join(parts))
    path.write_text("\n".join(lines) + "\n")


def _format_number(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def ensure_disjoint(train: DatasetManifest, test: DatasetManifest) -> None:
    shared = train.frame_ids() & test.frame_ids()
    if shared:
        sample = sorted(shared)[:5]
        raise IntegrityError(f"{len(shared)} frame ids shared across splits, e.g. {sample}")


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def save_image(image: np.ndarray, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    data = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def load_samples(
    manifest: DatasetManifest,
    answer_vocab: Vocab | None = None,
    images: dict[str, np.ndarray] | None = None,
) -> list[QASample]:
    """Materialize QASamples, reading frames from disk unless provided."""
    width, height = manifest.image_size
    samples = []
    for rec in manifest.records:
        if images is not None and rec.frame_id in images:
            image = images[rec.frame_id]
        else:
            root = manifest.root or Path(".")
            image = load_image(root / rec.frame_id)
        bbox = BBox.from_pixel_corners(*rec.box_pixels, width=width, height=height)
        answer_class = encode_answer(rec.answer, answer_vocab) if answer_vocab else -1
        sample = QASample(rec.frame_id, image.astype(np.float32), rec.question, answer_class, bbox)
        sample.validate(len(answer_vocab) if answer_vocab else None)
        samples.append(sample)
    return samples


# ---------------------------------------------------------------------------
# Synthetic scene generator

DEFAULT_COLORS = {
    "red": (0.85, 0.10, 0.10),
    "green": (0.10, 0.75, 0.15),
    "blue": (0.10, 0.25, 0.85),
    "yellow": (0.90, 0.85, 0.10),
    "magenta": (0.80, 0.10, 0.80),
    "cyan": (0.10, 0.80, 0.80),
}

DEFAULT_SHAPES = ("circle", "square", "triangle")

DEFAULT_TEMPLATES = {
    "attribute": (
        "what color is the {shape}",
        "what is the color of the {shape}",
        "which color does the {shape} have",
    ),
    "state": (
        "is the {color} {shape} large or small",
        "what size is the {color} {shape}",
        "how big is the {color} {shape}",
    ),
    "location": (
        "where is the {color} {shape}",
        "in which quadrant is the {color} {shape}",
        "where can the {color} {shape} be found",
    ),
    "identity": (
        "what shape is the {color} object",
        "what is the {color} object",
        "which shape has the color {color}",
    ),
}

QUADRANTS = ("top left", "top right", "bottom left", "bottom right")


@dataclass
class SyntheticConfig:
    image_size: int = 80
    shapes: tuple[str, ...] = DEFAULT_SHAPES
    colors: dict[str, tuple[float, float, float]] = field(
        default_factory=lambda: dict(DEFAULT_COLORS)
    )
    templates: dict[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_TEMPLATES)
    )
    train_samples: int = 256
    test_samples: int = 64
    min_objects: int = 1
    max_objects: int = 3
    overlap_iou_max: float = 0.05
    max_retries: int = 50
    seed: int = 0

    def validate(self) -> None:
        if self.image_size < 16:
            raise ConfigError("image_size must be >= 16")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ConfigError("need 1 <= min_objects <= max_objects")
        if self.max_objects > min(len(self.shapes), len(self.colors)):
            raise ConfigError("max_objects exceeds distinct shape/color supply")
        if self.train_samples < 1 or self.test_samples < 1:
            raise ConfigError("sample counts must be positive")


@dataclass
class SceneObject:
    shape: str
    color: str
    size_class: str  # "small" | "large"
    cx: int
    cy: int
    radius: int

    def mask(self, size: int) -> np.ndarray:
        ys, xs = np.mgrid[0:size, 0:size]
        if self.shape == "circle":
            return (xs - self.cx) ** 2 + (ys - self.cy) ** 2 <= self.radius**2
        if self.shape == "square":
            return np.maximum(np.abs(xs - self.cx), np.abs(ys - self.cy)) <= self.radius
        if self.shape == "triangle":
            # upward triangle: apex (cx, cy-r), base corners (cx±r, cy+r)
            within_rows = (ys >= self.cy - self.radius) & (ys <= self.cy + self.radius)
            half_width = (ys - (self.cy - self.radius)) / 2.0
            return within_rows & (np.abs(xs - self.cx) <= half_width)
        raise ConfigError(f"unknown shape {self.shape!r}")

    def tight_box(self, size: int) -> tuple[int, int, int, int]:
        mask = self.mask(size)
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        if rows.size == 0:
            raise GenerationError(f"object {self} rasterized to an empty mask")
        return int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1


@dataclass
class SyntheticDataset:
    train: DatasetManifest
    test: DatasetManifest
    images: dict[str, np.ndarray]

    def save(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for frame_id, image in self.images.items():
            save_image(image, out_dir / frame_id)
        save_manifest(self.train, out_dir / "train.manifest")
        save_manifest(self.test, out_dir / "test.manifest")
        self.train.root = out_dir
        self.test.root = out_dir


def _box_iou(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    ix = max(0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def _sample_object(
    cfg: SyntheticConfig, rng: np.random.Generator, shape: str, color: str
) -> SceneObject:
    size = cfg.image_size
    size_class = "small" if rng.random() < 0.5 else "large"
    frac = rng.uniform(0.08, 0.12) if size_class == "small" else rng.uniform(0.16, 0.22)
    radius = max(2, int(round(frac * size)))
    cx = int(rng.integers(radius + 1, size - radius - 1))
    cy = int(rng.integers(radius + 1, size - radius - 1))
    return SceneObject(shape, color, size_class, cx, cy, radius)


def _render_scene(cfg: SyntheticConfig, rng: np.random.Generator) -> tuple[np.ndarray, list[SceneObject]]:
    size = cfg.image_size
    count = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    shapes = list(rng.choice(cfg.shapes, size=count, replace=False))
    colors = list(rng.choice(sorted(cfg.colors), size=count, replace=False))
    objects: list[SceneObject] = []
    boxes: list[tuple[int, int, int, int]] = []
    for shape, color in zip(shapes, colors):
        for attempt in range(cfg.max_retries + 1):
            candidate = _sample_object(cfg, rng, shape, color)
            box = candidate.tight_box(size)
            if all(_box_iou(box, other) <= cfg.overlap_iou_max for other in boxes):
                objects.append(candidate)
                boxes.append(box)
                break
        else:
            raise GenerationError(
                f"could not place object {shape}/{color} after {cfg.max_retries} retries"
            )
    image = np.full((size, size, 3), 0.18, dtype=np.float32)
    image += rng.normal(0.0, 0.01, size=image.shape).astype(np.float32)
    for obj in objects:
        mask = obj.mask(size)
        image[mask] = cfg.colors[obj.color]
    return np.clip(image, 0.0, 1.0), objects


def _quadrant(box: tuple[int, int, int, int], size: int) -> str:
    cx = (box[0] + box[2]) / 2.0
    cy = (box[1] + box[3]) / 2.0
    vertical = "top" if cy < size / 2 else "bottom"
    horizontal = "left" if cx < size / 2 else "right"
    return f"{vertical} {horizontal}"


def generate_synthetic(cfg: SyntheticConfig) -> SyntheticDataset:
    """Render both splits with per-split seeds; deterministic given cfg.seed.

    Each sample's question targets exactly one object (objects within a
    scene never share a shape or color, so either attribute is unambiguous)
    and its box is that object's rasterized tight box.
    """
    cfg.validate()
    images: dict[str, np.ndarray] = {}
    manifests = {}
    question_kinds = tuple(cfg.templates)
    for split_index, (split, n_samples) in enumerate(
        (("train", cfg.train_samples), ("test", cfg.test_samples))
    ):
        rng = np.random.default_rng([cfg.seed, split_index])
        records = []
        for i in range(n_samples):
            image, objects = _render_scene(cfg, rng)
            target = objects[int(rng.integers(len(objects)))]
            kind = question_kinds[i % len(question_kinds)]
            template = cfg.templates[kind][int(rng.integers(len(cfg.templates[kind])))]
            question = template.format(shape=target.shape, color=target.color)
            box = target.tight_box(cfg.image_size)
            if kind == "attribute":
                answer = target.color
            elif kind == "state":
                answer = target.size_class
            elif kind == "location":
                answer = _quadrant(box, cfg.image_size)
            else:
                answer = target.shape
            frame_id = f"images/{split}_{i:05d}.png"
            images[frame_id] = image
            records.append(
                ManifestRecord(frame_id, question, answer, tuple(float(v) for v in box))
            )
        manifests[split] = DatasetManifest(
            split=split, image_size=(cfg.image_size, cfg.image_size), records=records
        )
    ensure_disjoint(manifests["train"], manifests["test"])
    return SyntheticDataset(train=manifests["train"], test=manifests["test"], images=images)
