"""Test and prediction runs: per-record results, summaries, filters,
sampling, label toggling, and conversion back into labeled datasets.

Runs are immutable; filters and toggles return new runs. Each record
carries the model's confidence (max class probability as a percentage)
and, when computed, the occlusion-based significance percentage. Records
made from geo-tagged patches keep the patch center coordinate, a Google
Maps link, and the patch bounds for map export.
"""
from __future__ import annotations

import datetime as _dt
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataset import ImageEntry, LabeledDataset, make_dataset
from .errors import DataError
from .explain import OcclusionConfig, occlusion_heatmap, significance as _significance
from .geogrid import GeoPoint
from .imagery import PatchSet, encode_png, load_image
from .metrics import ConfusionMatrix, MetricsReport, confusion, report
from .nn.checkpoint import Checkpoint, predict_batch

logger = logging.getLogger(__name__)

MODE_TEST = "test"
MODE_PREDICT = "predict"
_BATCH = 64


def maps_link(p: GeoPoint) -> str:
    """Google Maps URL for a point, 6 decimal places."""
    return f"https://www.google.com/maps?q={p.lat:.6f},{p.lon:.6f}"


@dataclass(frozen=True)
class PredictionRecord:
    filename: str
    predicted: str
    actual_or_chosen: str | None
    confidence_pct: float
    significance_pct: float | None
    geo: GeoPoint | None = None
    maps_link: str | None = None
    bounds: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if (self.geo is None) != (self.maps_link is None):
            raise DataError("maps_link must be present exactly when geo is")
        if not 0.0 <= self.confidence_pct <= 100.0:
            raise DataError(f"confidence_pct out of range: {self.confidence_pct}")
        if self.significance_pct is not None and not 0.0 <= self.significance_pct <= 100.0:
            raise DataError(f"significance_pct out of range: {self.significance_pct}")


@dataclass(frozen=True, eq=False)
class PredictionRun:
    checkpoint_id: str
    mode: str
    records: tuple[PredictionRecord, ...]
    label_order: tuple[str, str]
    created_at: str
    source: str
    images: dict | None = None  # filename -> (uint8 array, encoded bytes | None)

    def __post_init__(self):
        if self.mode not in (MODE_TEST, MODE_PREDICT):
            raise DataError(f"mode must be test or predict, got {self.mode!r}")
        if self.mode == MODE_TEST:
            for r in self.records:
                if r.actual_or_chosen is None:
                    raise DataError(f"test-mode record {r.filename!r} lacks an actual label")

    def __len__(self) -> int:
        return len(self.records)

    def image_for(self, filename: str):
        if self.images and filename in self.images:
            return self.images[filename][0]
        return None


@dataclass(frozen=True)
class RunSummary:
    total: int
    counts: dict[str, int]
    percentages: dict[str, float]
    displayed: dict[str, str]
    confusion: ConfusionMatrix | None = None
    metrics: MetricsReport | None = None

    def to_dict(self) -> dict:
        d = {
            "total": self.total,
            "counts": dict(self.counts),
            "percentages": {k: round(v, 2) for k, v in self.percentages.items()},
            "displayed": dict(self.displayed),
        }
        if self.confusion is not None:
            d["confusion"] = {
                "tp": self.confusion.tp,
                "fp": self.confusion.fp,
                "fn": self.confusion.fn,
                "tn": self.confusion.tn,
            }
        if self.metrics is not None:
            d["metrics"] = self.metrics.to_dict()
        return d


def _utcnow() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def run(
    ckpt: Checkpoint,
    inputs: PatchSet | LabeledDataset,
    mode: str = MODE_PREDICT,
    occlusion: OcclusionConfig | None = None,
    compute_significance: bool = False,
    checkpoint_id: str = "checkpoint",
    created_at: str | None = None,
    progress=None,
) -> PredictionRun:
    """Predict every input; one record per image, in input order.

    ``compute_significance`` turns on the per-record occlusion pass (one
    heatmap per image; markedly slower). Significance is otherwise stored
    as unknown and excluded by significance filters.
    """
    items: list[tuple[str, np.ndarray, str | None, GeoPoint | None, tuple | None, bytes | None]] = []
    if isinstance(inputs, LabeledDataset):
        source = "labeled-dataset"
        for label, e in inputs.entries():
            items.append((e.filename, e.image, label, e.geo, None, e.data))
    elif isinstance(inputs, PatchSet):
        source = "patch-set"
        for p in inputs.patches:
            bounds = p.meta.bounds if p.meta else None
            items.append((p.filename, p.image, None, p.center, bounds, None))
    else:
        raise DataError(f"cannot run on {type(inputs).__name__}")

    if not items:
        raise DataError("cannot run on an empty input set")
    if mode == MODE_TEST and any(actual is None for _, _, actual, _, _, _ in items):
        raise DataError("test mode needs labeled inputs")

    side = ckpt.model_spec.input_px
    for name, img, _, _, _, _ in items:
        if img.shape[0] != side or img.shape[1] != side:
            raise DataError(f"input {name!r} is {img.shape[1]}x{img.shape[0]}, model expects {side}")

    occ_cfg = occlusion or OcclusionConfig.for_side(side)
    records: list[PredictionRecord] = []
    images: dict = {}
    for start in range(0, len(items), _BATCH):
        chunk = items[start : start + _BATCH]
        stack = np.stack([img for _, img, _, _, _, _ in chunk])
        probs = predict_batch(ckpt, stack)
        for (name, img, actual, geo, bounds, data), p in zip(chunk, probs):
            cls = int(p.argmax())
            sig = None
            if compute_significance:
                smap = occlusion_heatmap(ckpt, img, occ_cfg)
                sig = _significance(smap)
            records.append(
                PredictionRecord(
                    filename=name,
                    predicted=ckpt.label_order[cls],
                    actual_or_chosen=actual,
                    confidence_pct=100.0 * float(p[cls]),
                    significance_pct=sig,
                    geo=geo,
                    maps_link=maps_link(geo) if geo else None,
                    bounds=bounds,
                )
            )
            images[name] = (img, data)
        if progress is not None:
            progress(min(start + _BATCH, len(items)), len(items))

    return PredictionRun(
        checkpoint_id=checkpoint_id,
        mode=mode,
        records=tuple(records),
        label_order=ckpt.label_order,
        created_at=created_at or _utcnow(),
        source=source,
        images=images,
    )


def summarize(run_: PredictionRun) -> RunSummary:
    """Per-class prediction counts, percentages, and test-mode metrics."""
    if not run_.records:
        raise DataError("cannot summarize an empty run")
    counts = {label: 0 for label in run_.label_order}
    for r in run_.records:
        counts[r.predicted] += 1
    total = len(run_.records)
    percentages = {k: 100.0 * v / total for k, v in counts.items()}
    displayed = {k: f"{round(v)}%" for k, v in percentages.items()}

    cm = rep = None
    if run_.mode == MODE_TEST:
        pairs = [(r.predicted, r.actual_or_chosen) for r in run_.records]
        cm = confusion(pairs, run_.label_order[1], run_.label_order)
        rep = report(cm)
    return RunSummary(
        total=total, counts=counts, percentages=percentages, displayed=displayed,
        confusion=cm, metrics=rep,
    )


def _derived(run_: PredictionRun, records: tuple[PredictionRecord, ...]) -> PredictionRun:
    return PredictionRun(
        checkpoint_id=run_.checkpoint_id,
        mode=run_.mode,
        records=records,
        label_order=run_.label_order,
        created_at=run_.created_at,
        source=run_.source,
        images=run_.images,
    )


def filter_confidence(run_: PredictionRun, min_pct: float) -> PredictionRun:
    """Keep records with confidence strictly greater than the threshold."""
    if not 0.0 <= min_pct <= 100.0:
        raise DataError(f"min_pct must be in [0, 100], got {min_pct}")
    return _derived(run_, tuple(r for r in run_.records if r.confidence_pct > min_pct))


def filter_significance(run_: PredictionRun, min_pct: float) -> PredictionRun:
    """Keep records whose known significance is strictly greater."""
    if not 0.0 <= min_pct <= 100.0:
        raise DataError(f"min_pct must be in [0, 100], got {min_pct}")
    return _derived(
        run_,
        tuple(r for r in run_.records if r.significance_pct is not None and r.significance_pct > min_pct),
    )


def random_sample(run_: PredictionRun, k: int, seed: int) -> PredictionRun:
    """Uniform sample of k records without replacement, input order kept."""
    n = len(run_.records)
    if not 0 <= k <= n:
        raise DataError(f"sample size {k} out of range [0, {n}]")
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(n, size=k, replace=False).tolist())
    return _derived(run_, tuple(run_.records[i] for i in chosen))


def toggle_label(run_: PredictionRun, index: int) -> PredictionRun:
    """Flip a record's chosen class; initialized to the prediction first."""
    if not 0 <= index < len(run_.records):
        raise DataError(f"record index {index} out of range")
    r = run_.records[index]
    current = r.actual_or_chosen if r.actual_or_chosen is not None else r.predicted
    other = run_.label_order[1] if current == run_.label_order[0] else run_.label_order[0]
    records = list(run_.records)
    records[index] = replace(r, actual_or_chosen=other)
    return _derived(run_, tuple(records))


def to_labeled_dataset(run_: PredictionRun) -> LabeledDataset:
    """File each image under its chosen (or predicted) class."""
    classes: dict[str, list[ImageEntry]] = {label: [] for label in run_.label_order}
    for r in run_.records:
        img = run_.image_for(r.filename)
        if img is None:
            logger.warning("record %s has no source image; skipped", r.filename)
            continue
        data = run_.images[r.filename][1] if run_.images else None
        label = r.actual_or_chosen if r.actual_or_chosen is not None else r.predicted
        classes[label].append(ImageEntry(r.filename, img, geo=r.geo, data=data))
    return make_dataset(classes, run_.label_order[1])


# ---------------------------------------------------------------------------
# run directory persistence: run.json + images/
# ---------------------------------------------------------------------------


def record_to_dict(r: PredictionRecord) -> dict:
    return {
        "filename": r.filename,
        "predicted": r.predicted,
        "actual_or_chosen": r.actual_or_chosen,
        "confidence_pct": r.confidence_pct,
        "significance_pct": r.significance_pct,
        "lat": r.geo.lat if r.geo else None,
        "lon": r.geo.lon if r.geo else None,
        "maps_link": r.maps_link,
        "bounds": list(r.bounds) if r.bounds else None,
    }


def record_from_dict(d: dict) -> PredictionRecord:
    geo = None
    if d.get("lat") is not None and d.get("lon") is not None:
        geo = GeoPoint(d["lat"], d["lon"])
    return PredictionRecord(
        filename=d["filename"],
        predicted=d["predicted"],
        actual_or_chosen=d.get("actual_or_chosen"),
        confidence_pct=d["confidence_pct"],
        significance_pct=d.get("significance_pct"),
        geo=geo,
        maps_link=d.get("maps_link"),
        bounds=tuple(d["bounds"]) if d.get("bounds") else None,
    )


def save_run(run_: PredictionRun, directory: str | Path, copy_images: bool = True) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "checkpoint_id": run_.checkpoint_id,
        "mode": run_.mode,
        "created_at": run_.created_at,
        "source": run_.source,
        "label_order": list(run_.label_order),
        "records": [record_to_dict(r) for r in run_.records],
    }
    (out / "run.json").write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
    if copy_images and run_.images:
        imgdir = out / "images"
        imgdir.mkdir(exist_ok=True)
        for r in run_.records:
            pair = run_.images.get(r.filename)
            if pair is None:
                continue
            img, data = pair
            (imgdir / r.filename).write_bytes(data if data is not None else encode_png(img))
    return out


def load_run(directory: str | Path) -> PredictionRun:
    root = Path(directory)
    doc = json.loads((root / "run.json").read_text(encoding="utf-8"))
    images = None
    imgdir = root / "images"
    if imgdir.is_dir():
        images = {}
        for f in sorted(imgdir.iterdir()):
            if f.is_file():
                images[f.name] = (load_image(f), f.read_bytes())
    return PredictionRun(
        checkpoint_id=doc["checkpoint_id"],
        mode=doc["mode"],
        records=tuple(record_from_dict(d) for d in doc["records"]),
        label_order=tuple(doc["label_order"]),
        created_at=doc["created_at"],
        source=doc["source"],
        images=images,
    )
