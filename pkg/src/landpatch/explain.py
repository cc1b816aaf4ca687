"""Occlusion-sensitivity heatmaps and the pixel "significance" statistic.

For each sliding window position the predicted class's probability is
re-evaluated with the window replaced by a baseline color; the score is
the probability drop. A pixel's saliency is the mean score over all
windows covering it, so positive values mark pixels that support the
prediction. Model-agnostic: needs only forward passes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .imagery import RasterImage, validate_raster
from .nn.checkpoint import Checkpoint, predict_batch

DEFAULT_WINDOW_PX = 20
DEFAULT_STRIDE_PX = 10


@dataclass(frozen=True)
class OcclusionConfig:
    window_px: int = DEFAULT_WINDOW_PX
    stride_px: int = DEFAULT_STRIDE_PX
    baseline: str = "mean-color"  # or "gray"
    batch_size: int = 64

    def __post_init__(self):
        if not 1 <= self.stride_px <= self.window_px:
            raise DataError(
                f"need 1 <= stride ({self.stride_px}) <= window ({self.window_px})"
            )
        if self.baseline not in ("mean-color", "gray"):
            raise DataError(f"unknown baseline {self.baseline!r}")

    @classmethod
    def for_side(cls, side_px: int, **kwargs) -> "OcclusionConfig":
        """Scale the default 20/10 geometry (tuned for 200 px patches)."""
        window = min(DEFAULT_WINDOW_PX, side_px)
        stride = min(DEFAULT_STRIDE_PX, window)
        return cls(window_px=window, stride_px=stride, **kwargs)


@dataclass(frozen=True)
class SaliencyMap:
    values: np.ndarray  # (H, W) float64
    config: OcclusionConfig

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def _window_starts(side: int, window: int, stride: int) -> list[int]:
    starts = list(range(0, side - window + 1, stride))
    # keep every pixel covered even when stride does not divide evenly
    if starts[-1] != side - window:
        starts.append(side - window)
    return starts


def occlusion_heatmap(ckpt: Checkpoint, img: RasterImage, cfg: OcclusionConfig | None = None) -> SaliencyMap:
    """Saliency of each pixel for the model's predicted class on ``img``."""
    validate_raster(img)
    h, w = img.shape[0], img.shape[1]
    if h != ckpt.model_spec.input_px or w != ckpt.model_spec.input_px:
        raise DataError(f"image is {w}x{h}, checkpoint expects {ckpt.model_spec.input_px}")
    if cfg is None:
        cfg = OcclusionConfig.for_side(h)
    if cfg.window_px > min(h, w):
        raise DataError(f"window {cfg.window_px} exceeds image side {min(h, w)}")

    base_probs = predict_batch(ckpt, img[None])
    pred = int(base_probs[0].argmax())
    p0 = float(base_probs[0, pred])

    if cfg.baseline == "mean-color":
        fill = img.reshape(-1, 3).mean(axis=0).round().astype(np.uint8)
    else:
        fill = np.array([128, 128, 128], dtype=np.uint8)

    ys = _window_starts(h, cfg.window_px, cfg.stride_px)
    xs = _window_starts(w, cfg.window_px, cfg.stride_px)
    positions = [(y, x) for y in ys for x in xs]

    scores = np.empty(len(positions), dtype=np.float64)
    for start in range(0, len(positions), cfg.batch_size):
        chunk = positions[start : start + cfg.batch_size]
        stack = np.repeat(img[None], len(chunk), axis=0)
        for i, (y, x) in enumerate(chunk):
            stack[i, y : y + cfg.window_px, x : x + cfg.window_px, :] = fill
        probs = predict_batch(ckpt, stack)
        scores[start : start + len(chunk)] = p0 - probs[:, pred]

    acc = np.zeros((h, w), dtype=np.float64)
    cover = np.zeros((h, w), dtype=np.float64)
    for (y, x), s in zip(positions, scores):
        acc[y : y + cfg.window_px, x : x + cfg.window_px] += s
        cover[y : y + cfg.window_px, x : x + cfg.window_px] += 1.0
    return SaliencyMap(values=acc / cover, config=cfg)


def significance(smap: SaliencyMap, threshold: float = 0.0) -> float:
    """Percentage of pixels whose saliency exceeds the threshold."""
    if threshold < 0:
        raise DataError(f"threshold must be >= 0, got {threshold}")
    v = smap.values
    return 100.0 * float((v > threshold).sum()) / v.size


def render_overlay(img: RasterImage, smap: SaliencyMap, blend: float = 0.45) -> RasterImage:
    """Alpha-blend a blue-to-red saliency ramp over the image."""
    validate_raster(img)
    if smap.values.shape != img.shape[:2]:
        raise DataError(f"map {smap.values.shape} does not match image {img.shape[:2]}")
    if not 0.0 <= blend <= 1.0:
        raise DataError(f"blend must be in [0, 1], got {blend}")
    v = smap.values
    lo, hi = float(v.min()), float(v.max())
    t = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    ramp = np.stack([t * 255.0, np.zeros_like(t), (1.0 - t) * 255.0], axis=-1)  # blue -> red
    out = (1.0 - blend) * img.astype(np.float64) + blend * ramp
    return np.clip(np.floor(out + 0.5), 0.0, 255.0).astype(np.uint8)


def saliency_png(smap: SaliencyMap) -> RasterImage:
    """Grayscale rendering of a saliency map (min -> 0, max -> 255)."""
    v = smap.values
    lo, hi = float(v.min()), float(v.max())
    t = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    g = np.floor(t * 255.0 + 0.5).astype(np.uint8)
    return np.stack([g, g, g], axis=-1)


def saliency_stats(smap: SaliencyMap, threshold: float = 0.0) -> dict:
    """JSON-able stats written beside exported saliency PNGs."""
    v = smap.values
    return {
        "width": smap.width,
        "height": smap.height,
        "min": float(v.min()),
        "max": float(v.max()),
        "mean": float(v.mean()),
        "significance_pct": significance(smap, threshold),
        "window_px": smap.config.window_px,
        "stride_px": smap.config.stride_px,
        "baseline": smap.config.baseline,
    }
