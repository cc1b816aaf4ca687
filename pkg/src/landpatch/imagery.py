"""Raster acquisition and patch splitting.

Images are numpy uint8 arrays of shape (height, width, 3), RGB. PNG and
JPEG are the supported codecs (via Pillow). A tile source is either a
directory of pre-rendered patch files named ``r<RR>_c<CC>.png`` or an HTTP
XYZ endpoint addressed with a ``{x}/{y}/{z}`` slippy-map URL template.
"""
from __future__ import annotations

import io
import math
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError, TransferError
from .geogrid import AreaSpec, GeoPatchGrid, GeoPatchMeta, GeoPoint, build_grid

RasterImage = np.ndarray  # (H, W, 3) uint8


def validate_raster(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"expected an (H, W, 3) array, got shape {getattr(img, 'shape', None)}")
    if img.dtype != np.uint8:
        raise DataError(f"expected uint8 pixels, got {img.dtype}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise DataError(f"degenerate image shape {img.shape}")
    return img


def decode_image(data: bytes) -> RasterImage:
    """Decode PNG or JPEG bytes to an RGB array."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode image: {exc}") from exc


def encode_png(img: RasterImage) -> bytes:
    validate_raster(img)
    buf = io.BytesIO()
    Image.fromarray(img, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def load_image(path: str | Path) -> RasterImage:
    return decode_image(Path(path).read_bytes())


def save_png(img: RasterImage, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(img))


@dataclass(frozen=True)
class Patch:
    image: RasterImage
    source_id: str
    meta: GeoPatchMeta | None = None
    geo: GeoPoint | None = None  # center-only tag when no grid cell is known

    @property
    def center(self) -> GeoPoint | None:
        if self.meta is not None:
            return self.meta.center
        return self.geo

    @property
    def filename(self) -> str:
        safe = re.sub(r"[^a-zA-Z0-9_.-]+", "_", self.source_id)
        if safe.lower().endswith((".png", ".jpg", ".jpeg")):
            return safe
        return safe + ".png"


@dataclass(frozen=True)
class PatchSet:
    patch_px: int
    patches: tuple[Patch, ...]

    def __len__(self) -> int:
        return len(self.patches)

    def __iter__(self):
        return iter(self.patches)


@dataclass(frozen=True)
class TileSourceConfig:
    """Where patches come from.

    kind "file-directory": ``root_or_url`` is a directory of
    ``r<RR>_c<CC>.png`` files (two-digit zero-padded indices).
    kind "http-xyz": ``root_or_url`` is a URL template with {x}, {y}, {z}
    placeholders; ``zoom`` selects the slippy-map zoom level.
    """

    kind: str
    root_or_url: str
    zoom: int = 18
    auth_token: str | None = None
    rate_limit_rps: float | None = None
    parallelism: int = 4
    retries: int = 3
    backoff_s: float = 0.25

    def __post_init__(self):
        if self.kind not in ("file-directory", "http-xyz"):
            raise DataError(f"unknown tile source kind {self.kind!r}")
        if self.kind == "http-xyz":
            for ph in ("{x}", "{y}", "{z}"):
                if ph not in self.root_or_url:
                    raise DataError(f"http-xyz template missing {ph}: {self.root_or_url!r}")


@dataclass(frozen=True)
class FetchFailure:
    row: int
    col: int
    source: str
    reason: str


@dataclass(frozen=True)
class FetchResult:
    patches: PatchSet
    failures: tuple[FetchFailure, ...]
    grid: GeoPatchGrid


def split_image(img: RasterImage, patch_px: int, origin: str = "image") -> PatchSet:
    """Cut a raster into patch_px squares, row-major from the top-left.

    Right and bottom remainders smaller than patch_px are discarded. An
    image smaller than patch_px in either axis yields an empty set.
    """
    validate_raster(img)
    if patch_px < 1:
        raise DataError(f"patch_px must be >= 1, got {patch_px}")
    h, w = img.shape[0], img.shape[1]
    rows = h // patch_px
    cols = w // patch_px
    patches = []
    for r in range(rows):
        for c in range(cols):
            tile = img[r * patch_px : (r + 1) * patch_px, c * patch_px : (c + 1) * patch_px].copy()
            patches.append(Patch(tile, f"{origin}#r{r}c{c}"))
    return PatchSet(patch_px=patch_px, patches=tuple(patches))


def attach_geo(ps: PatchSet, grid: GeoPatchGrid) -> PatchSet:
    """Tag each patch with the grid cell at the same row-major position."""
    n = grid.area.grid_n
    if len(ps) != n * n:
        raise DataError(f"patch count {len(ps)} does not match grid {n}x{n}")
    flat = [grid.cell(i // n, i % n) for i in range(n * n)]
    tagged = tuple(replace(p, meta=m) for p, m in zip(ps.patches, flat))
    return PatchSet(patch_px=ps.patch_px, patches=tagged)


class _RateLimiter:
    def __init__(self, rps: float | None):
        self._interval = 1.0 / rps if rps else 0.0
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self):
        if self._interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next - now
            self._next = max(now, self._next) + self._interval
        if delay > 0:
            time.sleep(delay)


def tile_xy(lat: float, lon: float, zoom: int) -> tuple[int, int]:
    """Slippy-map tile indices containing a point."""
    n = 2**zoom
    x = int(math.floor((lon + 180.0) / 360.0 * n))
    lat_r = math.radians(lat)
    y = int(math.floor((1.0 - math.asinh(math.tan(lat_r)) / math.pi) / 2.0 * n))
    return min(max(x, 0), n - 1), min(max(y, 0), n - 1)


def _fetch_http_tile(src: TileSourceConfig, limiter: _RateLimiter, x: int, y: int) -> bytes:
    import requests

    url = src.root_or_url.replace("{x}", str(x)).replace("{y}", str(y)).replace("{z}", str(src.zoom))
    headers = {}
    if src.auth_token:
        headers["Authorization"] = f"Bearer {src.auth_token}"
    last = None
    for attempt in range(src.retries):
        limiter.wait()
        try:
            resp = requests.get(url, headers=headers, timeout=30)
            if resp.status_code == 200:
                return resp.content
            last = f"HTTP {resp.status_code}"
        except requests.RequestException as exc:
            last = str(exc)
        time.sleep(src.backoff_s * (2**attempt))
    raise TransferError(f"tile fetch failed after {src.retries} attempts: {url}: {last}")


def fetch_area(src: TileSourceConfig, area: AreaSpec) -> FetchResult:
    """Fetch one patch per grid cell, already tagged with its cell meta.

    Missing or undecodable tiles are recorded as failures and the run
    continues; an unreachable HTTP source surfaces as a failure entry per
    cell once retries are exhausted.
    """
    grid = build_grid(area)
    n = area.grid_n
    limiter = _RateLimiter(src.rate_limit_rps)

    def fetch_cell(rc: tuple[int, int]):
        r, c = rc
        meta = grid.cell(r, c)
        if src.kind == "file-directory":
            path = Path(src.root_or_url) / f"r{r:02d}_c{c:02d}.png"
            sid = str(path)
            if not path.is_file():
                return FetchFailure(r, c, sid, "missing tile file")
            try:
                img = decode_image(path.read_bytes())
            except DataError as exc:
                return FetchFailure(r, c, sid, str(exc))
        else:
            x, y = tile_xy(meta.center.lat, meta.center.lon, src.zoom)
            sid = f"{src.root_or_url}#r{r}c{c}"
            try:
                img = decode_image(_fetch_http_tile(src, limiter, x, y))
            except (TransferError, DataError) as exc:
                return FetchFailure(r, c, sid, str(exc))
            if img.shape[0] < area.patch_px or img.shape[1] < area.patch_px:
                return FetchFailure(r, c, sid, f"tile {img.shape[1]}x{img.shape[0]} smaller than patch {area.patch_px}")
            img = _center_crop(img, area.patch_px)
        if img.shape[0] != area.patch_px or img.shape[1] != area.patch_px:
            return FetchFailure(r, c, sid, f"tile is {img.shape[1]}x{img.shape[0]}, expected {area.patch_px}")
        return Patch(img, f"r{r}c{c}", meta=meta)

    cells = [(r, c) for r in range(n) for c in range(n)]
    if src.kind == "http-xyz" and src.parallelism > 1:
        with ThreadPoolExecutor(max_workers=src.parallelism) as pool:
            results = list(pool.map(fetch_cell, cells))
    else:
        results = [fetch_cell(rc) for rc in cells]

    patches = tuple(r for r in results if isinstance(r, Patch))
    failures = tuple(r for r in results if isinstance(r, FetchFailure))
    return FetchResult(PatchSet(area.patch_px, patches), failures, grid)


def _center_crop(img: RasterImage, patch_px: int) -> RasterImage:
    top = (img.shape[0] - patch_px) // 2
    left = (img.shape[1] - patch_px) // 2
    return img[top : top + patch_px, left : left + patch_px].copy()


def load_patch_dir(path: str | Path) -> PatchSet:
    """Load a flat directory of equally-sized square images as a PatchSet.

    An optional manifest.csv supplies center coordinates per filename.
    """
    from .dataset import MANIFEST_NAME, read_manifest  # local import: no cycle at module load

    root = Path(path)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    manifest: dict = {}
    mpath = root / MANIFEST_NAME
    if mpath.is_file():
        manifest = read_manifest(mpath.read_text(encoding="utf-8"))

    patches = []
    side = None
    for f in sorted(root.iterdir()):
        if not f.is_file() or f.suffix.lower() not in (".png", ".jpg", ".jpeg"):
            continue
        img = decode_image(f.read_bytes())
        if img.shape[0] != img.shape[1]:
            raise DataError(f"{f.name}: patches must be square, got {img.shape[1]}x{img.shape[0]}")
        if side is None:
            side = img.shape[0]
        elif img.shape[0] != side:
            raise DataError(f"{f.name}: is {img.shape[0]} px, set is {side} px")
        geo = manifest[f.name][1] if f.name in manifest else None
        patches.append(Patch(img, f.name, geo=geo))
    if side is None:
        raise DataError(f"no images found in {root}")
    return PatchSet(patch_px=side, patches=tuple(patches))
