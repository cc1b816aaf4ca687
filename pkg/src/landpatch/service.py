"""HTTP service tying the pipeline together for the web UI and scripts.

State lives in a single workspace directory (datasets/, checkpoints/,
runs/, jobs.json) — no external database. Long work (fetch, augment,
train, predict) runs as jobs on one background worker per job kind;
training jobs accept pause/resume/stop/reset and stream epoch events over
server-sent events.

Environment: WORKSPACE_DIR, BIND_ADDR (used by the CLI), MAX_UPLOAD_MB,
TILE_RATE_LIMIT (requests/second for tile fetching).
"""
from __future__ import annotations

import json
import os
import queue
import shutil
import tempfile
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import Body, FastAPI, Header, HTTPException, Request, Response
from fastapi.responses import HTMLResponse, PlainTextResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from . import dataset as ds_mod
from . import export as export_mod
from . import inference as inf_mod
from .augment import AugmentSpec, augment_dataset
from .errors import DataError, LandpatchError, TransferError
from .explain import OcclusionConfig, occlusion_heatmap, render_overlay
from .geogrid import AreaSpec, GeoPoint
from .imagery import TileSourceConfig, encode_png, fetch_area, load_patch_dir, save_png
from .nn import RunControl, TrainConfig, build_architecture, load_checkpoint, save_checkpoint, train

DEFAULT_LABELS = ("negative", "positive")
TERMINAL_STATES = ("done", "failed", "stopped")


def _new_id() -> str:
    return uuid.uuid4().hex[:12]


# ---------------------------------------------------------------------------
# workspace
# ---------------------------------------------------------------------------


class Workspace:
    """On-disk index of datasets, checkpoints, and runs."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        for sub in ("datasets", "checkpoints", "runs"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self.lock = threading.RLock()

    # -- datasets ---------------------------------------------------------

    def _dataset_root(self, dataset_id: str) -> Path:
        p = self.root / "datasets" / dataset_id
        if not p.is_dir():
            raise KeyError(dataset_id)
        return p

    def _write_meta(self, root: Path, kind: str, labels: tuple[str, str]) -> None:
        (root / "meta.json").write_text(
            json.dumps({"kind": kind, "labels": list(labels)}), encoding="utf-8"
        )

    def _meta(self, dataset_id: str) -> dict:
        return json.loads((self._dataset_root(dataset_id) / "meta.json").read_text(encoding="utf-8"))

    def list_datasets(self) -> list[dict]:
        out = []
        with self.lock:
            for p in sorted((self.root / "datasets").iterdir()):
                if p.is_dir() and (p / "meta.json").is_file():
                    meta = json.loads((p / "meta.json").read_text(encoding="utf-8"))
                    out.append({"id": p.name, **meta, "patches": len(self.dataset_patches(p.name))})
        return out

    def add_labeled_dataset(self, ds: ds_mod.LabeledDataset) -> str:
        with self.lock:
            dataset_id = _new_id()
            root = self.root / "datasets" / dataset_id
            ds_mod.export_folder(ds, root / "data")
            self._write_meta(root, "labeled", ds.label_order)
            return dataset_id

    def add_dataset_from_folder(self, path: str | Path) -> str:
        src = Path(path)
        try:
            return self.add_labeled_dataset(ds_mod.import_folder(src))
        except DataError:
            pass
        # not a labeled tree: treat as a flat patch directory
        ps = load_patch_dir(src)
        return self.add_patch_dataset(ps)

    def add_patch_dataset(self, ps, labels: tuple[str, str] = DEFAULT_LABELS) -> str:
        with self.lock:
            dataset_id = _new_id()
            root = self.root / "datasets" / dataset_id
            data = root / "data"
            data.mkdir(parents=True)
            rows = []
            for p in ps.patches:
                save_png(p.image, data / p.filename)
                if p.center is not None:
                    rows.append((p.filename, "", p.center))
            if rows:
                (data / ds_mod.MANIFEST_NAME).write_text(
                    ds_mod.write_manifest(rows), encoding="utf-8"
                )
            self._write_meta(root, "patches", labels)
            return dataset_id

    def add_dataset_from_archive(self, data: bytes) -> str:
        with tempfile.NamedTemporaryFile(suffix=".tgz", delete=False) as tmp:
            tmp.write(data)
            tmp_path = Path(tmp.name)
        try:
            return self.add_labeled_dataset(ds_mod.import_archive(tmp_path))
        finally:
            tmp_path.unlink(missing_ok=True)

    def _labels_overlay(self, dataset_id: str) -> dict[str, str | None]:
        p = self._dataset_root(dataset_id) / "labels.json"
        if p.is_file():
            return json.loads(p.read_text(encoding="utf-8"))
        return {}

    def set_label(self, dataset_id: str, filename: str, label: str | None) -> dict:
        with self.lock:
            root = self._dataset_root(dataset_id)
            meta = self._meta(dataset_id)
            if label is not None and label not in meta["labels"]:
                raise DataError(f"label {label!r} not in {meta['labels']}")
            known = {p["filename"] for p in self.dataset_patches(dataset_id)}
            if filename not in known:
                raise KeyError(filename)
            overlay = self._labels_overlay(dataset_id)
            overlay[filename] = label
            (root / "labels.json").write_text(json.dumps(overlay, sort_keys=True), encoding="utf-8")
            return {"filename": filename, "label": label}

    def dataset_patches(self, dataset_id: str) -> list[dict]:
        root = self._dataset_root(dataset_id)
        meta = self._meta(dataset_id)
        data = root / "data"
        overlay = self._labels_overlay(dataset_id)
        manifest: dict = {}
        mpath = data / ds_mod.MANIFEST_NAME
        if mpath.is_file():
            manifest = ds_mod.read_manifest(mpath.read_text(encoding="utf-8"))

        rows = []
        if meta["kind"] == "labeled":
            files = [(f, sub.name) for sub in sorted(data.iterdir()) if sub.is_dir()
                     for f in sorted(sub.iterdir()) if f.is_file()]
        else:
            files = [(f, None) for f in sorted(data.iterdir())
                     if f.is_file() and f.suffix.lower() in (".png", ".jpg", ".jpeg")]
        for f, base_label in files:
            label = overlay.get(f.name, base_label)
            geo = manifest[f.name][1] if f.name in manifest else None
            rows.append(
                {
                    "filename": f.name,
                    "label": label,
                    "lat": None if geo is None else round(geo.lat, 6),
                    "lon": None if geo is None else round(geo.lon, 6),
                }
            )
        return rows

    def dataset_image_path(self, dataset_id: str, filename: str) -> Path:
        data = self._dataset_root(dataset_id) / "data"
        meta = self._meta(dataset_id)
        if meta["kind"] == "labeled":
            for sub in data.iterdir():
                if sub.is_dir() and (sub / filename).is_file():
                    return sub / filename
        elif (data / filename).is_file():
            return data / filename
        raise KeyError(filename)

    def labeled_dataset(self, dataset_id: str) -> ds_mod.LabeledDataset:
        """Effective labeled dataset: base tree plus labeling overrides."""
        root = self._dataset_root(dataset_id)
        meta = self._meta(dataset_id)
        data = root / "data"
        overlay = self._labels_overlay(dataset_id)
        labels = tuple(meta["labels"])
        positive = ds_mod.infer_positive_label(labels) if len(labels) == 2 else None

        if meta["kind"] == "labeled" and not overlay:
            return ds_mod.import_folder(data)

        manifest: dict = {}
        mpath = data / ds_mod.MANIFEST_NAME
        if mpath.is_file():
            manifest = ds_mod.read_manifest(mpath.read_text(encoding="utf-8"))
        classes: dict[str, list[ds_mod.ImageEntry]] = {label: [] for label in labels}
        for row in self.dataset_patches(dataset_id):
            label = row["label"]
            if label is None:
                continue  # unlabeled patches stay out of the training set
            path = self.dataset_image_path(dataset_id, row["filename"])
            raw = path.read_bytes()
            geo = manifest[row["filename"]][1] if row["filename"] in manifest else None
            from .imagery import decode_image

            classes[label].append(ds_mod.ImageEntry(row["filename"], decode_image(raw), geo=geo, data=raw))
        return ds_mod.make_dataset(classes, positive)

    def patch_set(self, dataset_id: str):
        return load_patch_dir(self._dataset_root(dataset_id) / "data")

    # -- checkpoints ------------------------------------------------------

    def save_checkpoint(self, ckpt) -> str:
        with self.lock:
            ckpt_id = _new_id()
            save_checkpoint(ckpt, self.root / "checkpoints" / f"{ckpt_id}.dtck")
            return ckpt_id

    def load_checkpoint(self, ckpt_id: str):
        p = self.root / "checkpoints" / f"{ckpt_id}.dtck"
        if not p.is_file():
            raise KeyError(ckpt_id)
        return load_checkpoint(p)

    def list_checkpoints(self) -> list[dict]:
        out = []
        for p in sorted((self.root / "checkpoints").glob("*.dtck")):
            out.append({"id": p.stem, "bytes": p.stat().st_size})
        return out

    # -- runs --------------------------------------------------------------

    def save_run(self, run) -> str:
        with self.lock:
            run_id = _new_id()
            inf_mod.save_run(run, self.root / "runs" / run_id)
            return run_id

    def replace_run(self, run_id: str, run) -> None:
        with self.lock:
            self._run_dir(run_id)  # existence check
            inf_mod.save_run(run, self.root / "runs" / run_id)

    def _run_dir(self, run_id: str) -> Path:
        p = self.root / "runs" / run_id
        if not p.is_dir():
            raise KeyError(run_id)
        return p

    def load_run(self, run_id: str):
        return inf_mod.load_run(self._run_dir(run_id))

    def run_heatmap_png(self, run_id: str, index: int) -> bytes:
        run = self.load_run(run_id)
        if not 0 <= index < len(run.records):
            raise KeyError(str(index))
        cache = self._run_dir(run_id) / "heatmaps"
        cache.mkdir(exist_ok=True)
        target = cache / f"{index}.png"
        if target.is_file():
            return target.read_bytes()
        record = run.records[index]
        img = run.image_for(record.filename)
        if img is None:
            raise DataError(f"record {record.filename!r} has no stored image")
        ckpt = self.load_checkpoint(run.checkpoint_id)
        smap = occlusion_heatmap(ckpt, img, OcclusionConfig.for_side(img.shape[0]))
        png = encode_png(render_overlay(img, smap))
        target.write_bytes(png)
        return png


# ---------------------------------------------------------------------------
# jobs
# ---------------------------------------------------------------------------


@dataclass
class Job:
    id: str
    kind: str
    params: dict
    state: str = "queued"
    progress: float = 0.0
    result: dict | None = None
    error: str | None = None
    events: list = field(default_factory=list)
    control: RunControl | None = None
    cond: threading.Condition = field(default_factory=threading.Condition)

    def emit(self, event: dict) -> None:
        with self.cond:
            self.events.append({"seq": len(self.events), **event})
            self.cond.notify_all()

    def set_state(self, state: str, **extra) -> None:
        with self.cond:
            self.state = state
        self.emit({"type": "state", "state": state, **extra})

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "state": self.state,
            "progress": self.progress,
            "result": self.result,
            "error": self.error,
        }


class JobRunner:
    """One worker thread per job kind; jobs run strictly in FIFO order."""

    def __init__(self, ws: Workspace, tile_rate_limit: float | None = None):
        self.ws = ws
        self.tile_rate_limit = tile_rate_limit
        self.jobs: dict[str, Job] = {}
        self._queues: dict[str, queue.Queue] = {}
        self._lock = threading.Lock()
        self._jobs_file = ws.root / "jobs.json"
        self._load_index()

    def _load_index(self) -> None:
        if not self._jobs_file.is_file():
            return
        for d in json.loads(self._jobs_file.read_text(encoding="utf-8")):
            job = Job(id=d["id"], kind=d["kind"], params={}, state=d["state"],
                      result=d.get("result"), error=d.get("error"))
            if job.state not in TERMINAL_STATES:
                job.state = "failed"
                job.error = "interrupted by service restart"
            self.jobs[job.id] = job

    def _persist(self) -> None:
        with self._lock:
            doc = [j.to_dict() for j in self.jobs.values()]
        self._jobs_file.write_text(json.dumps(doc, indent=2), encoding="utf-8")

    def _queue_for(self, kind: str) -> queue.Queue:
        with self._lock:
            q = self._queues.get(kind)
            if q is None:
                q = queue.Queue()
                self._queues[kind] = q
                threading.Thread(target=self._work_loop, args=(q,), daemon=True).start()
        return q

    def submit(self, kind: str, params: dict) -> Job:
        job = Job(id=_new_id(), kind=kind, params=params)
        if kind == "train":
            job.control = RunControl()
        with self._lock:
            self.jobs[job.id] = job
        self._queue_for(kind).put(job)
        self._persist()
        return job

    def resubmit(self, job: Job) -> None:
        """Reset: requeue a stopped training job from scratch."""
        job.control.reset()  # validates stopped -> reset-pending
        with job.cond:
            job.events.clear()
            job.progress = 0.0
            job.result = None
            job.error = None
        job.control = RunControl()
        job.set_state("queued")
        self._queue_for(job.kind).put(job)
        self._persist()

    def get(self, job_id: str) -> Job:
        with self._lock:
            return self.jobs[job_id]

    def _work_loop(self, q: queue.Queue) -> None:
        while True:
            job = q.get()
            try:
                job.set_state("running")
                result = self._execute(job)
                job.result = result
                if job.control is not None and job.control.state in (
                    RunControl.STOPPED,
                    RunControl.RESET_PENDING,
                ):
                    job.set_state("stopped", result=result)
                else:
                    job.progress = 1.0
                    job.set_state("done", result=result)
            except LandpatchError as exc:
                job.error = str(exc)
                job.set_state("failed", error=str(exc))
            except Exception as exc:  # noqa: BLE001 - worker must not die
                job.error = f"{type(exc).__name__}: {exc}"
                job.set_state("failed", error=job.error)
            finally:
                self._persist()

    def _execute(self, job: Job) -> dict:
        p = job.params
        if job.kind == "fetch":
            return self._run_fetch(job, p)
        if job.kind == "augment":
            ds = self.ws.labeled_dataset(p["dataset_id"])
            spec = AugmentSpec(**p["spec"])
            out = augment_dataset(ds, spec)
            return {"dataset_id": self.ws.add_labeled_dataset(out)}
        if job.kind == "train":
            return self._run_train(job, p)
        if job.kind == "predict":
            return self._run_predict(job, p)
        raise DataError(f"unknown job kind {job.kind!r}")

    def _run_fetch(self, job: Job, p: dict) -> dict:
        if "url" in p:
            ds = ds_mod.import_url(p["url"], cache_dir=self.ws.root / "url-cache")
            return {"dataset_id": self.ws.add_labeled_dataset(ds)}
        src = TileSourceConfig(rate_limit_rps=self.tile_rate_limit, **p["source"])
        ne = p["ne"]
        area = AreaSpec(
            GeoPoint(ne[0], ne[1]),
            side_m=p.get("side_m", 1000.0),
            grid_n=p.get("grid_n", 36),
            patch_px=p.get("patch_px", 200),
        )
        result = fetch_area(src, area)
        dataset_id = self.ws.add_patch_dataset(result.patches)
        return {
            "dataset_id": dataset_id,
            "fetched": len(result.patches),
            "failures": [f.reason for f in result.failures],
        }

    def _run_train(self, job: Job, p: dict) -> dict:
        ds = self.ws.labeled_dataset(p["dataset_id"])
        cfg = TrainConfig(**p.get("train_config", {}))
        side, _ = ds.image_size()
        spec = build_architecture(p.get("arch", "convnet"), side)

        def on_epoch(stats):
            job.progress = stats.epoch / cfg.max_epochs
            job.emit({"type": "epoch", **stats.to_dict()})

        ckpt = train(ds, spec, cfg, control=job.control, progress=on_epoch)
        ckpt_id = self.ws.save_checkpoint(ckpt)
        return {"checkpoint_id": ckpt_id, "epochs": len(ckpt.history), "best_epoch": ckpt.best_epoch}

    def _run_predict(self, job: Job, p: dict) -> dict:
        ckpt = self.ws.load_checkpoint(p["checkpoint_id"])
        dataset_id = p["dataset_id"]
        meta = self.ws._meta(dataset_id)
        mode = p.get("mode", "predict")
        inputs: Any
        if meta["kind"] == "labeled" or mode == "test":
            inputs = self.ws.labeled_dataset(dataset_id)
        else:
            inputs = self.ws.patch_set(dataset_id)

        def on_batch(done, total):
            job.progress = done / total
            job.emit({"type": "progress", "done": done, "total": total})

        run = inf_mod.run(
            ckpt,
            inputs,
            mode=mode,
            compute_significance=p.get("significance", False),
            checkpoint_id=p["checkpoint_id"],
            progress=on_batch,
        )
        return {"run_id": self.ws.save_run(run)}


# ---------------------------------------------------------------------------
# HTTP app
# ---------------------------------------------------------------------------


def create_app(
    workspace_dir: str | Path | None = None,
    static_dir: str | Path | None = None,
    max_upload_mb: int | None = None,
    tile_rate_limit: float | None = None,
) -> FastAPI:
    workspace_dir = workspace_dir or os.environ.get("WORKSPACE_DIR") or "./workspace"
    if max_upload_mb is None:
        max_upload_mb = int(os.environ.get("MAX_UPLOAD_MB", "256"))
    if tile_rate_limit is None:
        raw = os.environ.get("TILE_RATE_LIMIT", "")
        tile_rate_limit = float(raw) if raw else None

    ws = Workspace(workspace_dir)
    runner = JobRunner(ws, tile_rate_limit=tile_rate_limit)
    app = FastAPI(title="landpatch service", version="0.1.0")
    app.state.workspace = ws
    app.state.runner = runner
    toggle_keys: dict[str, dict[str, int]] = {}

    def _err(status: int, message: str):
        raise HTTPException(status_code=status, detail=message)

    @app.exception_handler(DataError)
    async def data_error_handler(_req, exc: DataError):
        return Response(
            content=json.dumps({"detail": str(exc)}), status_code=422, media_type="application/json"
        )

    @app.exception_handler(TransferError)
    async def transfer_error_handler(_req, exc: TransferError):
        return Response(
            content=json.dumps({"detail": str(exc)}), status_code=502, media_type="application/json"
        )

    # -- datasets ----------------------------------------------------------

    @app.post("/datasets", status_code=201)
    async def create_dataset(request: Request, response: Response):
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/"):
            form = await request.form()
            upload = form.get("archive")
            if upload is None:
                _err(422, "multipart upload needs an 'archive' file field")
            data = await upload.read()
            if len(data) > max_upload_mb * 1024 * 1024:
                _err(413, f"upload exceeds MAX_UPLOAD_MB={max_upload_mb}")
            return {"id": ws.add_dataset_from_archive(data)}
        body = await request.json()
        if "path" in body:
            return {"id": ws.add_dataset_from_folder(body["path"])}
        if "url" in body:
            job = runner.submit("fetch", {"url": body["url"]})
            response.status_code = 202
            return {"job_id": job.id}
        _err(422, "body must provide 'path', 'url', or a multipart 'archive'")

    @app.get("/datasets")
    def list_datasets():
        return ws.list_datasets()

    @app.get("/datasets/{dataset_id}/patches")
    def get_patches(dataset_id: str):
        try:
            return ws.dataset_patches(dataset_id)
        except KeyError:
            _err(404, f"no dataset {dataset_id}")

    @app.get("/datasets/{dataset_id}/images/{filename}")
    def get_image(dataset_id: str, filename: str):
        try:
            path = ws.dataset_image_path(dataset_id, filename)
        except KeyError:
            _err(404, f"no image {filename} in dataset {dataset_id}")
        media = "image/png" if path.suffix.lower() == ".png" else "image/jpeg"
        return Response(content=path.read_bytes(), media_type=media)

    @app.post("/datasets/{dataset_id}/labels")
    def set_label(dataset_id: str, payload: dict = Body(...)):
        if "filename" not in payload:
            _err(422, "need 'filename'")
        try:
            return ws.set_label(dataset_id, payload["filename"], payload.get("label"))
        except KeyError as exc:
            _err(404, f"unknown filename or dataset: {exc}")

    @app.post("/datasets/{dataset_id}/export")
    def export_dataset(dataset_id: str):
        try:
            ds = ws.labeled_dataset(dataset_id)
        except KeyError:
            _err(404, f"no dataset {dataset_id}")
        return {"id": ws.add_labeled_dataset(ds)}

    # -- jobs ---------------------------------------------------------------

    def _submit(kind: str, params: dict, response: Response):
        job = runner.submit(kind, params)
        response.status_code = 202
        return {"job_id": job.id}

    @app.post("/jobs/train", status_code=202)
    def submit_train(payload: dict = Body(...), response: Response = None):
        if "dataset_id" not in payload:
            _err(422, "need 'dataset_id'")
        TrainConfig(**payload.get("train_config", {}))  # validate early
        return _submit("train", payload, response)

    @app.post("/jobs/predict", status_code=202)
    def submit_predict(payload: dict = Body(...), response: Response = None):
        for key in ("checkpoint_id", "dataset_id"):
            if key not in payload:
                _err(422, f"need {key!r}")
        return _submit("predict", payload, response)

    @app.post("/jobs/augment", status_code=202)
    def submit_augment(payload: dict = Body(...), response: Response = None):
        if "dataset_id" not in payload:
            _err(422, "need 'dataset_id'")
        AugmentSpec(**payload.get("spec", {}))
        return _submit("augment", payload, response)

    @app.post("/jobs/fetch", status_code=202)
    def submit_fetch(payload: dict = Body(...), response: Response = None):
        if "url" not in payload and "source" not in payload:
            _err(422, "need 'url' or 'source'")
        return _submit("fetch", payload, response)

    @app.get("/jobs")
    def list_jobs():
        return [j.to_dict() for j in runner.jobs.values()]

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            return runner.get(job_id).to_dict()
        except KeyError:
            _err(404, f"no job {job_id}")

    @app.get("/jobs/{job_id}/events")
    def job_events(job_id: str, after: int = -1):
        try:
            job = runner.get(job_id)
        except KeyError:
            _err(404, f"no job {job_id}")

        def stream():
            next_seq = after + 1
            while True:
                with job.cond:
                    while len(job.events) <= next_seq and job.state not in TERMINAL_STATES:
                        job.cond.wait(timeout=0.5)
                    chunk = job.events[next_seq:]
                    state = job.state
                for event in chunk:
                    yield f"id: {event['seq']}\ndata: {json.dumps(event, sort_keys=True)}\n\n"
                    next_seq = event["seq"] + 1
                if state in TERMINAL_STATES and next_seq >= len(job.events):
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/jobs/{job_id}/control")
    def control_job(job_id: str, payload: dict = Body(...)):
        command = payload.get("command")
        if command not in ("pause", "resume", "stop", "reset"):
            _err(422, "command must be pause|resume|stop|reset")
        try:
            job = runner.get(job_id)
        except KeyError:
            _err(404, f"no job {job_id}")
        if job.kind != "train":
            _err(409, f"{job.kind} jobs do not accept control commands")
        if job.state in ("done", "failed"):
            _err(409, f"job is {job.state}")
        try:
            if command == "reset":
                if job.state != "stopped":
                    _err(409, f"can only reset a stopped job (state is {job.state})")
                runner.resubmit(job)
            elif command == "pause":
                job.control.pause()
                job.set_state("paused")
            elif command == "resume":
                job.control.resume()
                job.set_state("running")
            else:
                job.control.stop()
        except DataError as exc:
            _err(409, str(exc))
        return {"id": job.id, "state": job.state}

    # -- checkpoints ---------------------------------------------------------

    @app.get("/checkpoints")
    def list_checkpoints():
        return ws.list_checkpoints()

    @app.get("/checkpoints/{ckpt_id}")
    def get_checkpoint(ckpt_id: str):
        try:
            ckpt = ws.load_checkpoint(ckpt_id)
        except KeyError:
            _err(404, f"no checkpoint {ckpt_id}")
        return {
            "id": ckpt_id,
            "label_order": list(ckpt.label_order),
            "input_px": ckpt.model_spec.input_px,
            "best_epoch": ckpt.best_epoch,
            "history": [s.to_dict() for s in ckpt.history],
        }

    # -- runs -----------------------------------------------------------------

    def _run_or_404(run_id: str):
        try:
            return ws.load_run(run_id)
        except KeyError:
            _err(404, f"no run {run_id}")

    def _run_doc(run_id: str, run) -> dict:
        return {
            "id": run_id,
            "checkpoint_id": run.checkpoint_id,
            "mode": run.mode,
            "created_at": run.created_at,
            "label_order": list(run.label_order),
            "records": [inf_mod.record_to_dict(r) for r in run.records],
            # a fully filtered-out run has nothing to summarize
            "summary": inf_mod.summarize(run).to_dict() if run.records else None,
        }

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        return _run_doc(run_id, _run_or_404(run_id))

    @app.post("/runs/{run_id}/filters", status_code=201)
    def filter_run(run_id: str, payload: dict = Body(...)):
        run = _run_or_404(run_id)
        if "confidence" in payload:
            run = inf_mod.filter_confidence(run, float(payload["confidence"]))
        if "significance" in payload:
            run = inf_mod.filter_significance(run, float(payload["significance"]))
        if "sample" in payload:
            sample = payload["sample"]
            run = inf_mod.random_sample(run, int(sample["k"]), int(sample.get("seed", 0)))
        new_id = ws.save_run(run)
        return _run_doc(new_id, run)

    @app.post("/runs/{run_id}/records/{index}/toggle")
    def toggle_record(run_id: str, index: int, idempotency_key: str | None = Header(default=None)):
        run = _run_or_404(run_id)
        if idempotency_key:
            seen = toggle_keys.setdefault(run_id, {})
            if seen.get(idempotency_key) == index:
                return inf_mod.record_to_dict(ws.load_run(run_id).records[index])
            seen[idempotency_key] = index
        try:
            toggled = inf_mod.toggle_label(run, index)
        except DataError as exc:
            _err(404 if "out of range" in str(exc) else 422, str(exc))
        ws.replace_run(run_id, toggled)
        return inf_mod.record_to_dict(toggled.records[index])

    @app.get("/runs/{run_id}/records/{index}/heatmap.png")
    def record_heatmap(run_id: str, index: int):
        try:
            png = ws.run_heatmap_png(run_id, index)
        except KeyError:
            _err(404, f"no such record in run {run_id}")
        return Response(content=png, media_type="image/png")

    @app.get("/runs/{run_id}/export.csv")
    def export_csv(run_id: str):
        run = _run_or_404(run_id)
        return PlainTextResponse(export_mod.csv_text(run), media_type="text/csv")

    @app.get("/runs/{run_id}/export.json")
    def export_json(run_id: str):
        run = _run_or_404(run_id)
        return Response(content=export_mod.json_text(run), media_type="application/json")

    @app.get("/runs/{run_id}/export.html")
    def export_html(run_id: str, positive_only: bool = False):
        run = _run_or_404(run_id)
        try:
            return HTMLResponse(export_mod.html_text(run, positive_only=positive_only))
        except LandpatchError as exc:
            _err(422, str(exc))

    @app.post("/runs/{run_id}/to-dataset", status_code=201)
    def run_to_dataset(run_id: str):
        run = _run_or_404(run_id)
        ds = inf_mod.to_labeled_dataset(run)
        return {"dataset_id": ws.add_labeled_dataset(ds)}

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
