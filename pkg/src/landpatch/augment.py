"""Seeded geometric augmentation: rotation, shift, zoom, flips.

Transforms compose in a fixed order, flip -> zoom (about center) ->
rotate (about center) -> shift, and are applied by inverse mapping so the
output always has the source dimensions. Dead space is resolved by the
spec's fill mode. Sampling is counter-based: the transform for draw index
``i`` depends only on (spec.seed, i), so augmentation is reproducible and
order-independent.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import kernels
from .dataset import ImageEntry, LabeledDataset, make_dataset
from .errors import DataError
from .imagery import RasterImage, validate_raster

FILL_MODES = {
    "constant": kernels.FILL_CONSTANT,
    "nearest": kernels.FILL_NEAREST,
    "reflect": kernels.FILL_REFLECT,
    "wrap": kernels.FILL_WRAP,
}
INTERPOLATIONS = {"nearest": kernels.INTERP_NEAREST, "bilinear": kernels.INTERP_BILINEAR}


@dataclass(frozen=True)
class AugmentSpec:
    rotation_max_deg: float = 0.0
    shift_max_frac: float = 0.0
    zoom_range: tuple[float, float] = (1.0, 1.0)
    hflip: bool = False
    vflip: bool = False
    fill_mode: str = "constant"
    fill_value: int = 0
    interpolation: str = "bilinear"
    copies_per_image: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.rotation_max_deg < 0:
            raise DataError(f"rotation_max_deg must be >= 0, got {self.rotation_max_deg}")
        if not 0.0 <= self.shift_max_frac < 1.0:
            raise DataError(f"shift_max_frac must be in [0, 1), got {self.shift_max_frac}")
        lo, hi = self.zoom_range
        if not 0.0 < lo <= hi:
            raise DataError(f"zoom_range must satisfy 0 < low <= high, got {self.zoom_range}")
        if self.fill_mode not in FILL_MODES:
            raise DataError(f"unknown fill_mode {self.fill_mode!r}")
        if not 0 <= self.fill_value <= 255:
            raise DataError(f"fill_value must be an 8-bit value, got {self.fill_value}")
        if self.interpolation not in INTERPOLATIONS:
            raise DataError(f"unknown interpolation {self.interpolation!r}")
        if self.copies_per_image < 1:
            raise DataError(f"copies_per_image must be >= 1, got {self.copies_per_image}")
        object.__setattr__(self, "zoom_range", (float(lo), float(hi)))

    def to_json(self) -> str:
        d = asdict(self)
        d["zoom_range"] = list(self.zoom_range)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AugmentSpec":
        d = json.loads(text)
        if "zoom_range" in d:
            d["zoom_range"] = tuple(d["zoom_range"])
        return cls(**d)


@dataclass(frozen=True)
class GeoTransform:
    angle_deg: float
    shift_x_frac: float
    shift_y_frac: float
    zoom: float
    do_hflip: bool
    do_vflip: bool

    @property
    def is_identity(self) -> bool:
        return (
            self.angle_deg == 0.0
            and self.shift_x_frac == 0.0
            and self.shift_y_frac == 0.0
            and self.zoom == 1.0
            and not self.do_hflip
            and not self.do_vflip
        )


def sample_transform(spec: AugmentSpec, draw_index: int) -> GeoTransform:
    """Draw one transform; a pure function of (spec.seed, draw_index)."""
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, draw_index)))
    r = spec.rotation_max_deg
    s = spec.shift_max_frac
    lo, hi = spec.zoom_range
    angle = float(rng.uniform(-r, r))
    shift_x = float(rng.uniform(-s, s))
    shift_y = float(rng.uniform(-s, s))
    zoom = float(rng.uniform(lo, hi))
    do_h = bool(spec.hflip and rng.random() < 0.5)
    do_v = bool(spec.vflip and rng.random() < 0.5)
    return GeoTransform(angle, shift_x, shift_y, zoom, do_h, do_v)


def inverse_affine(t: GeoTransform, side_px: int) -> tuple[float, float, float, float, float, float]:
    """2x3 matrix mapping output pixel (x, y) to source coordinates.

    Exact identity coefficients fall out for the identity transform, which
    keeps the no-op path byte-stable.
    """
    c = (side_px - 1) / 2.0
    theta = math.radians(t.angle_deg)
    cos_t = math.cos(-theta)
    sin_t = math.sin(-theta)
    inv_z = 1.0 / t.zoom
    fx = -1.0 if t.do_hflip else 1.0
    fy = -1.0 if t.do_vflip else 1.0
    # linear part: flip . (1/zoom) . rot(-theta)
    l00 = fx * inv_z * cos_t
    l01 = fx * inv_z * -sin_t
    l10 = fy * inv_z * sin_t
    l11 = fy * inv_z * cos_t
    tx = t.shift_x_frac * side_px
    ty = t.shift_y_frac * side_px
    m02 = c - l00 * (c + tx) - l01 * (c + ty)
    m12 = c - l10 * (c + tx) - l11 * (c + ty)
    return l00, l01, m02, l10, l11, m12


def apply_transform(img: RasterImage, t: GeoTransform, spec: AugmentSpec) -> RasterImage:
    """Resample a square image under the transform; same output dimensions."""
    validate_raster(img)
    if img.shape[0] != img.shape[1]:
        raise DataError(f"augmentation needs square input, got {img.shape[1]}x{img.shape[0]}")
    m00, m01, m02, m10, m11, m12 = inverse_affine(t, img.shape[0])
    out = kernels.affine_sample(
        img.astype(np.float64),
        m00, m01, m02, m10, m11, m12,
        FILL_MODES[spec.fill_mode],
        float(spec.fill_value),
        INTERPOLATIONS[spec.interpolation],
    )
    return np.clip(np.floor(out + 0.5), 0.0, 255.0).astype(np.uint8)


def variant_name(filename: str, variant: int) -> str:
    stem = filename.rsplit(".", 1)[0]
    return f"{stem}_aug{variant:02d}.png"


def augment_dataset(ds: LabeledDataset, spec: AugmentSpec) -> LabeledDataset:
    """Expand a dataset with copies_per_image transformed variants per image.

    Originals are retained; output size is len(ds) * (1 + copies_per_image).
    Variants keep their source's label and coordinate.
    """
    existing = {e.filename for _, e in ds.entries()}
    out: dict[str, list[ImageEntry]] = {label: list(ds.classes[label]) for label in ds.label_order}
    for i, (label, entry) in enumerate(ds.entries()):
        for v in range(spec.copies_per_image):
            name = variant_name(entry.filename, v)
            if name in existing:
                raise DataError(f"augmented name {name!r} collides with an existing file")
            existing.add(name)
            t = sample_transform(spec, i * spec.copies_per_image + v)
            img = apply_transform(entry.image, t, spec)
            out[label].append(ImageEntry(name, img, geo=entry.geo))
    return make_dataset(out, ds.positive_label)


def write_spec(spec: AugmentSpec, directory: str | Path) -> Path:
    """Drop augment.json beside an augmented output for provenance."""
    path = Path(directory) / "augment.json"
    path.write_text(spec.to_json() + "\n", encoding="utf-8")
    return path
