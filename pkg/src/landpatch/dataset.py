"""Labeled datasets: folder/archive/URL import, manifest, split, export.

On-disk layout is one subdirectory per class label containing PNG or JPEG
images, plus an optional ``manifest.csv`` (``filename,label,lat,lon``,
RFC-4180, coordinates at 6 decimal places, blank when unknown; lines
starting with ``#`` are treated as comments). A ``.tgz`` archive holds the
same tree, optionally wrapped in a single top-level directory.

Datasets are binary: exactly two labels, with a designated positive class.
When not stated explicitly the positive label is inferred: if one label is
``not_<other>`` the bare one is positive, otherwise the alphabetically
first label is. Labels must be lowercase letters, digits, or underscores.
"""
from __future__ import annotations

import csv
import gzip
import hashlib
import io
import logging
import re
import tarfile
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, TransferError
from .geogrid import GeoPoint
from .imagery import RasterImage, decode_image, encode_png

logger = logging.getLogger(__name__)

LABEL_RE = re.compile(r"^[a-z0-9_]+$")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
MANIFEST_NAME = "manifest.csv"
DEFAULT_URL_CAP_BYTES = 512 * 1024 * 1024


def valid_label(name: str) -> bool:
    return bool(LABEL_RE.match(name))


@dataclass(frozen=True, eq=False)
class ImageEntry:
    filename: str
    image: RasterImage
    geo: GeoPoint | None = None
    data: bytes | None = None  # original encoded bytes, kept for byte-exact export


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    classes: dict[str, tuple[ImageEntry, ...]]
    label_order: tuple[str, str]  # (negative, positive)

    @property
    def positive_label(self) -> str:
        return self.label_order[1]

    @property
    def negative_label(self) -> str:
        return self.label_order[0]

    def __len__(self) -> int:
        return sum(len(v) for v in self.classes.values())

    def entries(self):
        """All (label, entry) pairs in label order, filename order."""
        for label in self.label_order:
            for e in self.classes[label]:
                yield label, e

    def image_size(self) -> tuple[int, int]:
        label = self.label_order[0]
        img = self.classes[label][0].image
        return img.shape[0], img.shape[1]


def infer_positive_label(labels: tuple[str, str]) -> str:
    a, b = sorted(labels)
    if b == f"not_{a}":
        return a
    if a == f"not_{b}":
        return b
    return a


def make_dataset(
    classes: dict[str, list[ImageEntry]], positive_label: str | None = None
) -> LabeledDataset:
    """Validate and freeze a class map into a LabeledDataset."""
    if len(classes) != 2:
        raise DataError(f"need exactly 2 classes, got {sorted(classes)}")
    for label, entries in classes.items():
        if not valid_label(label):
            raise DataError(f"invalid label {label!r}: use lowercase letters, digits, underscore")
        if not entries:
            raise DataError(f"class {label!r} is empty")
    labels = tuple(sorted(classes))
    if positive_label is None:
        positive_label = infer_positive_label(labels)
    if positive_label not in classes:
        raise DataError(f"positive label {positive_label!r} not among classes {labels}")
    negative_label = labels[0] if labels[1] == positive_label else labels[1]

    seen: set[str] = set()
    dims: tuple[int, int] | None = None
    for label in labels:
        for e in classes[label]:
            if e.filename in seen:
                raise DataError(f"duplicate filename {e.filename!r}")
            seen.add(e.filename)
            hw = (e.image.shape[0], e.image.shape[1])
            if dims is None:
                dims = hw
            elif hw != dims:
                raise DataError(f"image {e.filename!r} is {hw}, dataset is {dims}")

    frozen = {
        label: tuple(sorted(classes[label], key=lambda e: e.filename)) for label in labels
    }
    return LabeledDataset(classes=frozen, label_order=(negative_label, positive_label))


def datasets_equal(a: LabeledDataset, b: LabeledDataset, coord_tol: float = 1e-6) -> bool:
    if a.label_order != b.label_order:
        return False
    for label in a.label_order:
        ea, eb = a.classes[label], b.classes[label]
        if len(ea) != len(eb):
            return False
        for x, y in zip(ea, eb):
            if x.filename != y.filename or not np.array_equal(x.image, y.image):
                return False
            if (x.geo is None) != (y.geo is None):
                return False
            if x.geo is not None and (
                abs(x.geo.lat - y.geo.lat) > coord_tol or abs(x.geo.lon - y.geo.lon) > coord_tol
            ):
                return False
    return True


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


def read_manifest(text: str) -> dict[str, tuple[str, GeoPoint | None]]:
    """Parse manifest.csv text into filename -> (label, geo)."""
    rows: dict[str, tuple[str, GeoPoint | None]] = {}
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or [h.strip() for h in header[:4]] != ["filename", "label", "lat", "lon"]:
        raise DataError("manifest.csv must start with header filename,label,lat,lon")
    for row in reader:
        if len(row) < 4:
            continue
        fname, label, lat_s, lon_s = row[0], row[1], row[2].strip(), row[3].strip()
        geo = None
        if lat_s and lon_s:
            geo = GeoPoint(float(lat_s), float(lon_s))
        rows[fname] = (label, geo)
    return rows


def write_manifest(entries: list[tuple[str, str, GeoPoint | None]], comments: list[str] | None = None) -> str:
    """Render manifest.csv text from (filename, label, geo) rows."""
    buf = io.StringIO()
    for c in comments or []:
        buf.write(f"# {c}\r\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["filename", "label", "lat", "lon"])
    for fname, label, geo in entries:
        if geo is None:
            writer.writerow([fname, label, "", ""])
        else:
            writer.writerow([fname, label, f"{geo.lat:.6f}", f"{geo.lon:.6f}"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# imports
# ---------------------------------------------------------------------------


def import_folder(path: str | Path, positive_label: str | None = None) -> LabeledDataset:
    """Import <root>/<label>/<image> with an optional root manifest.csv."""
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if len(subdirs) < 2:
        raise DataError(f"need at least 2 class subdirectories under {root}, found {len(subdirs)}")

    manifest: dict[str, tuple[str, GeoPoint | None]] = {}
    mpath = root / MANIFEST_NAME
    if mpath.is_file():
        manifest = read_manifest(mpath.read_text(encoding="utf-8"))

    classes: dict[str, list[ImageEntry]] = {}
    for sub in subdirs:
        entries: list[ImageEntry] = []
        for f in sorted(sub.iterdir()):
            if not f.is_file() or f.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            data = f.read_bytes()
            try:
                img = decode_image(data)
            except DataError as exc:
                logger.warning("skipping undecodable file %s: %s", f, exc)
                continue
            geo = None
            if f.name in manifest:
                geo = manifest[f.name][1]
            entries.append(ImageEntry(f.name, img, geo=geo, data=data))
        if not entries:
            raise DataError(f"class directory {sub.name!r} has no decodable images")
        classes[sub.name] = entries
    return make_dataset(classes, positive_label)


def _safe_extract(tar: tarfile.TarFile, dest: Path) -> None:
    for member in tar.getmembers():
        target = dest / member.name
        if not str(target.resolve()).startswith(str(dest.resolve())):
            raise DataError(f"archive member escapes extraction root: {member.name}")
    tar.extractall(dest)


def import_archive(path: str | Path, positive_label: str | None = None) -> LabeledDataset:
    """Import a .tgz archive holding the folder layout.

    A single top-level directory wrapping the class directories is
    unwrapped transparently.
    """
    apath = Path(path)
    if not apath.is_file():
        raise DataError(f"no such archive: {apath}")
    with tempfile.TemporaryDirectory(prefix="landpatch-tgz-") as tmp:
        dest = Path(tmp)
        try:
            with tarfile.open(apath, "r:gz") as tar:
                _safe_extract(tar, dest)
        except (tarfile.TarError, EOFError, OSError) as exc:
            raise DataError(f"cannot read archive {apath}: {exc}") from exc
        root = _unwrap_single_root(dest)
        return import_folder(root, positive_label)


def _unwrap_single_root(dest: Path) -> Path:
    children = [p for p in dest.iterdir() if not p.name.startswith(".")]
    dirs = [p for p in children if p.is_dir()]
    files = [p for p in children if p.is_file() and p.name != MANIFEST_NAME]
    if len(dirs) == 1 and not files:
        return dirs[0]
    return dest


def import_url(
    url: str,
    cache_dir: str | Path | None = None,
    positive_label: str | None = None,
    max_bytes: int = DEFAULT_URL_CAP_BYTES,
    retries: int = 3,
    backoff_s: float = 0.25,
) -> LabeledDataset:
    """Download a .tgz (cached per URL) and import it."""
    import requests

    cache = Path(cache_dir) if cache_dir else Path(tempfile.gettempdir()) / "landpatch-url-cache"
    cache.mkdir(parents=True, exist_ok=True)
    key = hashlib.sha256(url.encode("utf-8")).hexdigest()[:24]
    target = cache / f"{key}.tgz"

    if not target.is_file():
        last = None
        for attempt in range(retries):
            try:
                with requests.get(url, stream=True, timeout=60) as resp:
                    if resp.status_code != 200:
                        last = f"HTTP {resp.status_code}"
                    else:
                        size = 0
                        tmp = target.with_suffix(".part")
                        with open(tmp, "wb") as out:
                            for chunk in resp.iter_content(chunk_size=1 << 16):
                                size += len(chunk)
                                if size > max_bytes:
                                    tmp.unlink(missing_ok=True)
                                    raise DataError(
                                        f"download exceeds cap of {max_bytes} bytes: {url}"
                                    )
                                out.write(chunk)
                        tmp.replace(target)
                        break
            except requests.RequestException as exc:
                last = str(exc)
            time.sleep(backoff_s * (2**attempt))
        else:
            raise TransferError(f"download failed after {retries} attempts: {url}: {last}")

    return import_archive(target, positive_label)


# ---------------------------------------------------------------------------
# split and export
# ---------------------------------------------------------------------------


def split_train_val(
    ds: LabeledDataset, ratio: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified per-class split; ratio is the train fraction.

    Per class, round(ratio * n) entries go to train, clamped so neither
    side is empty. Deterministic for a given seed.
    """
    if not 0.0 < ratio < 1.0:
        raise DataError(f"ratio must be in (0, 1), got {ratio}")
    train: dict[str, list[ImageEntry]] = {}
    val: dict[str, list[ImageEntry]] = {}
    for ci, label in enumerate(ds.label_order):
        entries = ds.classes[label]
        n = len(entries)
        if n < 2:
            raise DataError(f"class {label!r} has {n} entries; need at least 2 to split")
        n_train = min(max(round(ratio * n), 1), n - 1)
        rng = np.random.default_rng(np.random.SeedSequence((seed, ci)))
        perm = rng.permutation(n)
        chosen = set(perm[:n_train].tolist())
        train[label] = [e for i, e in enumerate(entries) if i in chosen]
        val[label] = [e for i, e in enumerate(entries) if i not in chosen]
    pos = ds.positive_label
    return make_dataset(train, pos), make_dataset(val, pos)


def export_folder(ds: LabeledDataset, path: str | Path) -> Path:
    """Write the dataset as the on-disk folder layout."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    rows: list[tuple[str, str, GeoPoint | None]] = []
    for label in ds.label_order:
        sub = root / label
        sub.mkdir(exist_ok=True)
        for e in ds.classes[label]:
            data = e.data if e.data is not None else encode_png(e.image)
            (sub / e.filename).write_bytes(data)
            rows.append((e.filename, label, e.geo))
    if any(geo is not None for _, _, geo in rows):
        (root / MANIFEST_NAME).write_text(write_manifest(rows), encoding="utf-8")
    return root


def export_archive(ds: LabeledDataset, path: str | Path) -> Path:
    """Write the dataset as a .tgz that round-trips through import_archive.

    Original encoded bytes are reused where known; otherwise images are
    encoded as PNG. manifest.csv is included when any entry carries a
    coordinate. Tar metadata is fixed so identical datasets produce
    identical archives.
    """
    out = Path(path)
    rows: list[tuple[str, str, GeoPoint | None]] = []
    members: list[tuple[str, bytes]] = []
    for label in ds.label_order:
        for e in ds.classes[label]:
            data = e.data if e.data is not None else encode_png(e.image)
            members.append((f"{label}/{e.filename}", data))
            rows.append((e.filename, label, e.geo))
    if any(geo is not None for _, _, geo in rows):
        members.append((MANIFEST_NAME, write_manifest(rows).encode("utf-8")))

    try:
        # gzip(mtime=0) so identical datasets produce identical archive bytes
        with open(out, "wb") as raw:
            with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
                with tarfile.open(fileobj=gz, mode="w") as tar:
                    for name, data in sorted(members):
                        info = tarfile.TarInfo(name=name)
                        info.size = len(data)
                        info.mtime = 0
                        tar.addfile(info, io.BytesIO(data))
    except OSError as exc:
        raise DataError(f"cannot write archive {out}: {exc}") from exc
    return out
