"""Image corruption suite: 19 kinds in 4 categories, 5 severity levels each.

Every kind maps a float RGB image in [0, 1] to another one, deterministic
given the spec's seed. Parameter ladders follow the common-corruptions
benchmark where a matching family exists there, adjusted where needed so
mean distortion grows with severity; the surgical occlusion kinds
(bleeding, smoke, spatter) use documented substitutes.
"""

from __future__ import annotations

import io
import zlib
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import distance_transform_edt, gaussian_filter, map_coordinates, zoom
from skimage.color import hsv2rgb, rgb2hsv

from .dataio import DatasetManifest, ManifestRecord, load_image, save_image, save_manifest
from .exceptions import ConfigError

CATEGORIES = {
    "noise": ("gaussian_noise", "shot_noise", "impulse_noise", "speckle_noise"),
    "blur": ("defocus_blur", "gaussian_blur", "glass_blur", "motion_blur", "zoom_blur"),
    "occlusion": ("bleeding", "brightness", "smoke", "spatter"),
    "digital": ("contrast", "elastic", "gamma", "jpeg", "pixelate", "saturate"),
}

ALL_KINDS = tuple(kind for kinds in CATEGORIES.values() for kind in kinds)


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ConfigError(f"unknown corruption kind {self.kind!r}")
        if not 0 <= self.severity <= 5:
            raise ConfigError(f"severity {self.severity} outside 0..5")


def category_of(kind: str) -> str:
    for category, kinds in CATEGORIES.items():
        if kind in kinds:
            return category
    raise ConfigError(f"unknown corruption kind {kind!r}")


def _level(spec_or_severity) -> int:
    return spec_or_severity - 1


# --- noise -----------------------------------------------------------------


def _gaussian_noise(x, severity, rng):
    c = [0.08, 0.12, 0.18, 0.26, 0.38][_level(severity)]
    return x + rng.normal(0.0, c, size=x.shape)


def _shot_noise(x, severity, rng):
    c = [60, 25, 12, 5, 3][_level(severity)]
    return rng.poisson(x * c) / c


def _impulse_noise(x, severity, rng):
    c = [0.03, 0.06, 0.09, 0.17, 0.27][_level(severity)]
    # color salt-and-pepper: affected pixels flip to 0 or 1 per channel
    flip = rng.random(x.shape[:2]) < c
    values = rng.integers(0, 2, size=x.shape).astype(x.dtype)
    out = x.copy()
    out[flip] = values[flip]
    return out


def _speckle_noise(x, severity, rng):
    c = [0.15, 0.20, 0.35, 0.45, 0.60][_level(severity)]
    return x + x * rng.normal(0.0, c, size=x.shape)


# --- blur ------------------------------------------------------------------


def _disk_kernel(radius):
    grid = np.arange(-radius, radius + 1)
    xs, ys = np.meshgrid(grid, grid)
    kernel = ((xs**2 + ys**2) <= radius**2).astype(np.float64)
    return kernel / kernel.sum()


def _convolve_rgb(x, kernel):
    pad = kernel.shape[0] // 2
    padded = np.pad(x, ((pad, pad), (pad, pad), (0, 0)), mode="reflect")
    out = np.empty_like(x)
    # separable fallback is not worth it at these sizes; do FFT-free direct conv
    for channel in range(3):
        acc = np.zeros_like(x[..., channel], dtype=np.float64)
        for dy in range(kernel.shape[0]):
            for dx in range(kernel.shape[1]):
                weight = kernel[dy, dx]
                if weight == 0.0:
                    continue
                acc += weight * padded[dy : dy + x.shape[0], dx : dx + x.shape[1], channel]
        out[..., channel] = acc
    return out


def _defocus_blur(x, severity, rng):
    radius = [2, 3, 4, 6, 8][_level(severity)]
    return _convolve_rgb(x, _disk_kernel(radius))


def _gaussian_blur(x, severity, rng):
    sigma = [1, 2, 3, 4, 6][_level(severity)]
    return gaussian_filter(x, sigma=(sigma, sigma, 0))


def _glass_blur(x, severity, rng):
    sigma, max_delta, iterations = [
        (0.7, 1, 1),
        (0.9, 2, 2),
        (1.1, 2, 3),
        (1.3, 3, 3),
        (1.6, 4, 4),
    ][_level(severity)]
    out = gaussian_filter(x, sigma=(sigma, sigma, 0))
    h, w = x.shape[:2]
    rows, cols = np.mgrid[0:h, 0:w]
    for _ in range(iterations):
        dy = rng.integers(-max_delta, max_delta + 1, size=(h, w))
        dx = rng.integers(-max_delta, max_delta + 1, size=(h, w))
        src_r = np.clip(rows + dy, 0, h - 1)
        src_c = np.clip(cols + dx, 0, w - 1)
        out = out[src_r, src_c]
    return gaussian_filter(out, sigma=(sigma, sigma, 0))


def _line_kernel(length, angle):
    size = length if length % 2 == 1 else length + 1
    kernel = np.zeros((size, size))
    center = size // 2
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    for t in np.linspace(-length / 2, length / 2, 4 * size):
        r = int(round(center + t * sin_a))
        c = int(round(center + t * cos_a))
        if 0 <= r < size and 0 <= c < size:
            kernel[r, c] = 1.0
    return kernel / kernel.sum()


def _motion_blur(x, severity, rng):
    length = [5, 7, 9, 12, 15][_level(severity)]
    angle = rng.uniform(0, np.pi)
    return _convolve_rgb(x, _line_kernel(length, angle))


def _zoom_blur(x, severity, rng):
    max_factor = [1.06, 1.11, 1.16, 1.21, 1.26][_level(severity)]
    h, w = x.shape[:2]
    acc = x.astype(np.float64).copy()
    count = 1
    for factor in np.arange(1.01, max_factor, 0.02):
        zoomed = zoom(x, (factor, factor, 1), order=1)
        zh, zw = zoomed.shape[:2]
        top, left = (zh - h) // 2, (zw - w) // 2
        acc += zoomed[top : top + h, left : left + w]
        count += 1
    return acc / count


# --- occlusion -------------------------------------------------------------


def _low_frequency_field(shape, rng, cells=6):
    coarse = rng.random((cells, cells))
    field = zoom(coarse, (shape[0] / cells, shape[1] / cells), order=3)
    field = field[: shape[0], : shape[1]]
    field = (field - field.min()) / max(field.max() - field.min(), 1e-9)
    return field


def _bleeding(x, severity, rng):
    count = [2, 4, 6, 8, 10][_level(severity)]
    opacity = [0.40, 0.50, 0.60, 0.75, 0.90][_level(severity)]
    blood = np.array([0.45, 0.02, 0.02])
    h, w = x.shape[:2]
    overlay = np.zeros((h, w), dtype=np.float64)
    ys, xs = np.mgrid[0:h, 0:w]
    for _ in range(count):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        radius = rng.uniform(0.08, 0.18) * min(h, w)
        dist2 = ((ys - cy) ** 2 + (xs - cx) ** 2) / radius**2
        overlay = np.maximum(overlay, np.exp(-dist2 * 2.0))
    alpha = np.clip(overlay * opacity, 0, 1)[..., None]
    return x * (1 - alpha) + blood * alpha


def _brightness(x, severity, rng):
    c = [0.1, 0.2, 0.3, 0.4, 0.5][_level(severity)]
    hsv = rgb2hsv(np.clip(x, 0, 1))
    hsv[..., 2] = np.clip(hsv[..., 2] + c, 0, 1)
    return hsv2rgb(hsv)


def _smoke(x, severity, rng):
    opacity = [0.18, 0.28, 0.38, 0.48, 0.58][_level(severity)]
    field = _low_frequency_field(x.shape[:2], rng)
    alpha = (0.35 + 0.65 * field) * opacity
    gray = 0.82
    return x * (1 - alpha[..., None]) + gray * alpha[..., None]


def _spatter(x, severity, rng):
    coverage = [0.04, 0.08, 0.13, 0.19, 0.26][_level(severity)]
    field = _low_frequency_field(x.shape[:2], rng, cells=10)
    threshold = np.quantile(field, 1 - coverage)
    droplets = field >= threshold
    soft = gaussian_filter(droplets.astype(np.float64), sigma=1.0)
    soft = np.clip(soft * 1.5, 0, 1)[..., None]
    # water film: locally blurred and lightened
    wet = gaussian_filter(x, sigma=(2, 2, 0)) * 0.85 + 0.15
    return x * (1 - soft) + wet * soft


# --- digital ---------------------------------------------------------------


def _contrast(x, severity, rng):
    c = [0.4, 0.3, 0.2, 0.1, 0.05][_level(severity)]
    mean = x.mean(axis=(0, 1), keepdims=True)
    return (x - mean) * c + mean


def _elastic(x, severity, rng):
    h, w = x.shape[:2]
    scale = min(h, w)
    alpha = [0.04, 0.07, 0.10, 0.14, 0.18][_level(severity)] * scale
    sigma = 0.12 * scale
    dx = gaussian_filter(rng.uniform(-1, 1, size=(h, w)), sigma) * alpha
    dy = gaussian_filter(rng.uniform(-1, 1, size=(h, w)), sigma) * alpha
    rows, cols = np.mgrid[0:h, 0:w]
    coords = (rows + dy).ravel(), (cols + dx).ravel()
    out = np.empty_like(x)
    for channel in range(3):
        out[..., channel] = map_coordinates(
            x[..., channel], coords, order=1, mode="reflect"
        ).reshape(h, w)
    return out


def _gamma(x, severity, rng):
    exponent = [1.4, 1.8, 2.3, 2.9, 3.6][_level(severity)]
    return np.clip(x, 0, 1) ** exponent


def _jpeg(x, severity, rng):
    quality = [25, 18, 15, 10, 7][_level(severity)]
    image = Image.fromarray(np.clip(np.round(x * 255), 0, 255).astype(np.uint8))
    buffer = io.BytesIO()
    image.save(buffer, format="JPEG", quality=quality)
    buffer.seek(0)
    return np.asarray(Image.open(buffer), dtype=np.float64) / 255.0


def _pixelate(x, severity, rng):
    c = [0.6, 0.5, 0.4, 0.3, 0.25][_level(severity)]
    h, w = x.shape[:2]
    small_h, small_w = max(1, int(h * c)), max(1, int(w * c))
    image = Image.fromarray(np.clip(np.round(x * 255), 0, 255).astype(np.uint8))
    image = image.resize((small_w, small_h), Image.BOX).resize((w, h), Image.NEAREST)
    return np.asarray(image, dtype=np.float64) / 255.0


def _saturate(x, severity, rng):
    c = [0.75, 0.55, 0.38, 0.22, 0.08][_level(severity)]
    hsv = rgb2hsv(np.clip(x, 0, 1))
    hsv[..., 1] = np.clip(hsv[..., 1] * c, 0, 1)
    return hsv2rgb(hsv)


_FUNCTIONS = {
    "gaussian_noise": _gaussian_noise,
    "shot_noise": _shot_noise,
    "impulse_noise": _impulse_noise,
    "speckle_noise": _speckle_noise,
    "defocus_blur": _defocus_blur,
    "gaussian_blur": _gaussian_blur,
    "glass_blur": _glass_blur,
    "motion_blur": _motion_blur,
    "zoom_blur": _zoom_blur,
    "bleeding": _bleeding,
    "brightness": _brightness,
    "smoke": _smoke,
    "spatter": _spatter,
    "contrast": _contrast,
    "elastic": _elastic,
    "gamma": _gamma,
    "jpeg": _jpeg,
    "pixelate": _pixelate,
    "saturate": _saturate,
}

_KIND_INDEX = {kind: i for i, kind in enumerate(ALL_KINDS)}


def stable_frame_seed(seed: int, frame_id: str) -> int:
    """Stable per-frame seed component; independent of Python hash salts."""
    return (seed << 32) ^ zlib.crc32(frame_id.encode("utf-8"))


def corrupt(image: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Apply one corruption; severity 0 is the identity (test hook)."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ConfigError(f"expected H×W×3 image, got shape {image.shape}")
    if image.min() < 0 or image.max() > 1:
        raise ConfigError("image values must lie in [0, 1]")
    if spec.severity == 0:
        return image.astype(np.float32).copy()
    rng = np.random.default_rng([spec.seed & 0xFFFFFFFFFFFF, _KIND_INDEX[spec.kind], spec.severity])
    out = _FUNCTIONS[spec.kind](image.astype(np.float64), spec.severity, rng)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def corrupt_dataset(
    manifest: DatasetManifest,
    kinds,
    severities,
    out_dir,
    seed: int = 0,
    images: dict[str, np.ndarray] | None = None,
):
    """Write one corrupted copy of every frame per (kind, severity).

    Layout: ``out_dir/<kind>/<severity>/<frame file>`` with a mirrored
    manifest per subtree. I/O failures are recorded per file and the run
    continues; the failure list is returned with the written manifests.
    """
    from pathlib import Path

    out_dir = Path(out_dir)
    kinds = list(kinds)
    severities = list(severities)
    for kind in kinds:
        if kind not in ALL_KINDS:
            raise ConfigError(f"unknown corruption kind {kind!r}")
    failures: list[tuple[str, str]] = []
    manifests: dict[tuple[str, int], Path] = {}
    cache: dict[str, np.ndarray] = {}
    for rec in manifest.records:
        if rec.frame_id in cache:
            continue
        if images is not None and rec.frame_id in images:
            cache[rec.frame_id] = images[rec.frame_id]
        else:
            root = manifest.root or Path(".")
            try:
                cache[rec.frame_id] = load_image(root / rec.frame_id)
            except OSError as exc:
                failures.append((rec.frame_id, str(exc)))
    for kind in kinds:
        for severity in severities:
            records = []
            subdir = out_dir / kind / str(severity)
            for rec in manifest.records:
                if rec.frame_id not in cache:
                    continue
                spec = CorruptionSpec(kind, severity, stable_frame_seed(seed, rec.frame_id))
                corrupted = corrupt(cache[rec.frame_id], spec)
                flat_name = rec.frame_id.replace("/", "_")
                try:
                    save_image(corrupted, subdir / flat_name)
                except OSError as exc:
                    failures.append((rec.frame_id, str(exc)))
                    continue
                records.append(
                    ManifestRecord(
                        flat_name, rec.question, rec.answer, rec.box_pixels, (kind, severity)
                    )
                )
            tree_manifest = DatasetManifest(
                split=f"{manifest.split}-{kind}-{severity}",
                image_size=manifest.image_size,
                records=records,
                root=subdir,
            )
            path = subdir / "manifest.txt"
            save_manifest(tree_manifest, path)
            manifests[(kind, severity)] = path
    return manifests, failures
