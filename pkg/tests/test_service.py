import io
import json
import tarfile
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from fastapi.testclient import TestClient

from landpatch.dataset import export_archive
from landpatch.service import create_app
from conftest import blob_dataset


@pytest.fixture
def client(tmp_path):
    app = create_app(workspace_dir=tmp_path / "ws")
    with TestClient(app) as c:
        yield c


def blob_tgz(tmp_path, n=8, side=12, seed=0) -> bytes:
    ds = blob_dataset(n_per_class=n, side=side, seed=seed)
    path = tmp_path / f"blob_{n}_{seed}.tgz"
    export_archive(ds, path)
    return path.read_bytes()


def upload_dataset(client, tmp_path, n=8, seed=0) -> str:
    data = blob_tgz(tmp_path, n=n, seed=seed)
    resp = client.post("/datasets", files={"archive": ("ds.tgz", data, "application/gzip")})
    assert resp.status_code == 201, resp.text
    return resp.json()["id"]


def wait_for_job(client, job_id, timeout=120.0) -> dict:
    deadline = time.time() + timeout
    while time.time() < deadline:
        doc = client.get(f"/jobs/{job_id}").json()
        if doc["state"] in ("done", "failed", "stopped"):
            return doc
        time.sleep(0.05)
    raise TimeoutError(f"job {job_id} did not finish: {doc}")


def train_checkpoint(client, tmp_path, dataset_id=None, max_epochs=4) -> str:
    dataset_id = dataset_id or upload_dataset(client, tmp_path)
    resp = client.post("/jobs/train", json={
        "dataset_id": dataset_id,
        "train_config": {"max_epochs": max_epochs, "batch_size": 4, "seed": 1,
                         "early_stopping_patience": 0},
    })
    assert resp.status_code == 202, resp.text
    done = wait_for_job(client, resp.json()["job_id"])
    assert done["state"] == "done", done
    return done["result"]["checkpoint_id"]


def predict_run(client, tmp_path, checkpoint_id, dataset_id, mode="predict") -> str:
    resp = client.post("/jobs/predict", json={
        "checkpoint_id": checkpoint_id, "dataset_id": dataset_id, "mode": mode,
    })
    assert resp.status_code == 202
    done = wait_for_job(client, resp.json()["job_id"])
    assert done["state"] == "done", done
    return done["result"]["run_id"]


def test_upload_archive_creates_dataset(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path)
    listing = client.get("/datasets").json()
    assert any(d["id"] == dataset_id for d in listing)


def test_bad_archive_is_422(client):
    resp = client.post("/datasets", files={"archive": ("bad.tgz", b"junk", "application/gzip")})
    assert resp.status_code == 422


def test_create_dataset_needs_inputs(client):
    assert client.post("/datasets", json={}).status_code == 422


def test_upload_cap(tmp_path):
    app = create_app(workspace_dir=tmp_path / "ws", max_upload_mb=1)
    with TestClient(app) as c:
        big = b"\x00" * (1024 * 1024 + 100)
        resp = c.post("/datasets", files={"archive": ("big.tgz", big, "application/gzip")})
        assert resp.status_code == 413


def test_patches_and_labels_flow(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path)
    patches = client.get(f"/datasets/{dataset_id}/patches").json()
    assert len(patches) == 16
    target = patches[0]["filename"]
    original = patches[0]["label"]

    other = "target" if original == "background" else "background"
    resp = client.post(f"/datasets/{dataset_id}/labels",
                       json={"filename": target, "label": other})
    assert resp.status_code == 200

    relisted = client.get(f"/datasets/{dataset_id}/patches").json()
    row = next(p for p in relisted if p["filename"] == target)
    assert row["label"] == other

    # last write wins
    client.post(f"/datasets/{dataset_id}/labels", json={"filename": target, "label": original})
    relisted = client.get(f"/datasets/{dataset_id}/patches").json()
    row = next(p for p in relisted if p["filename"] == target)
    assert row["label"] == original


def test_label_unknown_filename_404(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path)
    resp = client.post(f"/datasets/{dataset_id}/labels",
                       json={"filename": "ghost.png", "label": "target"})
    assert resp.status_code == 404


def test_label_unknown_dataset_404(client):
    assert client.get("/datasets/none/patches").status_code == 404


def test_dataset_image_served(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path)
    patches = client.get(f"/datasets/{dataset_id}/patches").json()
    resp = client.get(f"/datasets/{dataset_id}/images/{patches[0]['filename']}")
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"
    assert resp.content[:8] == b"\x89PNG\r\n\x1a\n"


class _TgzHandler(BaseHTTPRequestHandler):
    payload = b""

    def do_GET(self):
        self.send_response(200)
        self.end_headers()
        self.wfile.write(self.payload)

    def log_message(self, *args):
        pass


def test_url_import_via_job(client, tmp_path):
    handler = type("H", (_TgzHandler,), {"payload": blob_tgz(tmp_path, n=3, seed=5)})
    server = HTTPServer(("127.0.0.1", 0), handler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        url = f"http://127.0.0.1:{server.server_address[1]}/ds.tgz"
        resp = client.post("/datasets", json={"url": url})
        assert resp.status_code == 202
        done = wait_for_job(client, resp.json()["job_id"])
        assert done["state"] == "done"
        dataset_id = done["result"]["dataset_id"]
        assert len(client.get(f"/datasets/{dataset_id}/patches").json()) == 6
    finally:
        server.shutdown()


def test_train_job_event_stream_ends_done(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path)
    resp = client.post("/jobs/train", json={
        "dataset_id": dataset_id,
        "train_config": {"max_epochs": 3, "batch_size": 4, "seed": 2,
                         "early_stopping_patience": 0},
    })
    job_id = resp.json()["job_id"]
    wait_for_job(client, job_id)
    events = []
    with client.stream("GET", f"/jobs/{job_id}/events") as stream:
        for line in stream.iter_lines():
            if line.startswith("data: "):
                events.append(json.loads(line[len("data: "):]))
    epochs = [e["epoch"] for e in events if e["type"] == "epoch"]
    assert epochs == [1, 2, 3]
    states = [e["state"] for e in events if e["type"] == "state"]
    assert states[-1] == "done"
    final = client.get(f"/jobs/{job_id}").json()
    assert final["result"]["checkpoint_id"]
    assert final["result"]["epochs"] == 3


def test_invalid_train_config_rejected_up_front(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path)
    resp = client.post("/jobs/train", json={
        "dataset_id": dataset_id, "train_config": {"max_epochs": 0},
    })
    assert resp.status_code == 422


def test_pause_resume_keeps_epochs_contiguous(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path, n=20, seed=3)
    resp = client.post("/jobs/train", json={
        "dataset_id": dataset_id,
        "train_config": {"max_epochs": 10_000, "batch_size": 2, "seed": 3,
                         "early_stopping_patience": 0},
    })
    job_id = resp.json()["job_id"]
    deadline = time.time() + 60
    while client.get(f"/jobs/{job_id}").json()["state"] != "running" and time.time() < deadline:
        time.sleep(0.02)

    time.sleep(0.3)
    assert client.post(f"/jobs/{job_id}/control", json={"command": "pause"}).status_code == 200
    assert client.get(f"/jobs/{job_id}").json()["state"] == "paused"
    time.sleep(0.3)

    assert client.post(f"/jobs/{job_id}/control", json={"command": "resume"}).status_code == 200
    time.sleep(0.3)
    assert client.post(f"/jobs/{job_id}/control", json={"command": "stop"}).status_code == 200
    done = wait_for_job(client, job_id)
    assert done["state"] == "stopped"

    events = []
    with client.stream("GET", f"/jobs/{job_id}/events") as stream:
        for line in stream.iter_lines():
            if line.startswith("data: "):
                events.append(json.loads(line[len("data: "):]))
    epochs = [e["epoch"] for e in events if e["type"] == "epoch"]
    assert epochs == list(range(1, len(epochs) + 1))  # contiguous across the pause
    # a stopped job still yields a usable checkpoint
    assert done["result"]["checkpoint_id"]


def test_control_on_done_job_is_409(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path)
    resp = client.post("/jobs/train", json={
        "dataset_id": dataset_id,
        "train_config": {"max_epochs": 1, "batch_size": 8, "seed": 1,
                         "early_stopping_patience": 0},
    })
    job_id = resp.json()["job_id"]
    wait_for_job(client, job_id)
    for command in ("pause", "resume", "stop", "reset"):
        assert client.post(f"/jobs/{job_id}/control", json={"command": command}).status_code == 409


def test_reset_requeues_stopped_training(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path, n=20, seed=4)
    resp = client.post("/jobs/train", json={
        "dataset_id": dataset_id,
        "train_config": {"max_epochs": 10_000, "batch_size": 2, "seed": 4,
                         "early_stopping_patience": 0},
    })
    job_id = resp.json()["job_id"]
    deadline = time.time() + 60
    while client.get(f"/jobs/{job_id}").json()["state"] != "running" and time.time() < deadline:
        time.sleep(0.02)
    time.sleep(0.2)
    client.post(f"/jobs/{job_id}/control", json={"command": "stop"})
    wait_for_job(client, job_id)

    resp = client.post(f"/jobs/{job_id}/control", json={"command": "reset"})
    assert resp.status_code == 200

    # it re-runs from scratch; stop it again and confirm it progressed
    deadline = time.time() + 60
    while client.get(f"/jobs/{job_id}").json()["state"] not in ("running", "paused") and time.time() < deadline:
        time.sleep(0.02)
    client.post(f"/jobs/{job_id}/control", json={"command": "stop"})
    done = wait_for_job(client, job_id)
    assert done["state"] in ("stopped", "done")


def test_unknown_command_422(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path)
    resp = client.post("/jobs/train", json={
        "dataset_id": dataset_id,
        "train_config": {"max_epochs": 1, "batch_size": 8, "seed": 1,
                         "early_stopping_patience": 0},
    })
    job_id = resp.json()["job_id"]
    assert client.post(f"/jobs/{job_id}/control", json={"command": "dance"}).status_code == 422
    wait_for_job(client, job_id)


def test_predict_flow_records_and_summary(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path, n=10, seed=6)
    ckpt_id = train_checkpoint(client, tmp_path, dataset_id=dataset_id)
    run_id = predict_run(client, tmp_path, ckpt_id, dataset_id, mode="test")

    doc = client.get(f"/runs/{run_id}").json()
    assert len(doc["records"]) == 20
    assert all("confidence_pct" in r for r in doc["records"])
    assert all(r["actual_or_chosen"] for r in doc["records"])
    assert doc["summary"]["total"] == 20
    assert "confusion" in doc["summary"]


def test_filters_endpoint(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path, n=10, seed=7)
    ckpt_id = train_checkpoint(client, tmp_path, dataset_id=dataset_id)
    run_id = predict_run(client, tmp_path, ckpt_id, dataset_id)

    base = client.get(f"/runs/{run_id}").json()
    resp = client.post(f"/runs/{run_id}/filters", json={"confidence": 95})
    assert resp.status_code == 201
    filtered = resp.json()
    expect = [r for r in base["records"] if r["confidence_pct"] > 95]
    assert len(filtered["records"]) == len(expect)
    assert filtered["id"] != run_id
    # original run unchanged
    assert len(client.get(f"/runs/{run_id}").json()["records"]) == 20

    resp = client.post(f"/runs/{run_id}/filters", json={"sample": {"k": 5, "seed": 3}})
    assert len(resp.json()["records"]) == 5
    resp2 = client.post(f"/runs/{run_id}/filters", json={"sample": {"k": 5, "seed": 3}})
    assert [r["filename"] for r in resp.json()["records"]] == \
           [r["filename"] for r in resp2.json()["records"]]


def test_toggle_endpoint_flips_and_persists(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path, n=6, seed=8)
    ckpt_id = train_checkpoint(client, tmp_path, dataset_id=dataset_id)
    run_id = predict_run(client, tmp_path, ckpt_id, dataset_id)

    before = client.get(f"/runs/{run_id}").json()["records"][0]
    resp = client.post(f"/runs/{run_id}/records/0/toggle")
    assert resp.status_code == 200
    after = resp.json()
    assert after["actual_or_chosen"] != before["predicted"]
    # persisted: visible on a fresh GET
    stored = client.get(f"/runs/{run_id}").json()["records"][0]
    assert stored["actual_or_chosen"] == after["actual_or_chosen"]
    # toggle twice restores
    client.post(f"/runs/{run_id}/records/0/toggle")
    restored = client.get(f"/runs/{run_id}").json()["records"][0]
    assert restored["actual_or_chosen"] == before["predicted"]


def test_toggle_idempotency_key_applies_once(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path, n=6, seed=9)
    ckpt_id = train_checkpoint(client, tmp_path, dataset_id=dataset_id)
    run_id = predict_run(client, tmp_path, ckpt_id, dataset_id)

    headers = {"Idempotency-Key": "abc123"}
    first = client.post(f"/runs/{run_id}/records/1/toggle", headers=headers).json()
    second = client.post(f"/runs/{run_id}/records/1/toggle", headers=headers).json()
    assert first["actual_or_chosen"] == second["actual_or_chosen"]
    stored = client.get(f"/runs/{run_id}").json()["records"][1]
    assert stored["actual_or_chosen"] == first["actual_or_chosen"]


def test_heatmap_endpoint(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path, n=6, seed=10)
    ckpt_id = train_checkpoint(client, tmp_path, dataset_id=dataset_id)
    run_id = predict_run(client, tmp_path, ckpt_id, dataset_id)
    resp = client.get(f"/runs/{run_id}/records/0/heatmap.png")
    assert resp.status_code == 200
    assert resp.content[:8] == b"\x89PNG\r\n\x1a\n"
    assert client.get(f"/runs/{run_id}/records/999/heatmap.png").status_code == 404


def test_export_endpoints(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path, n=6, seed=11)
    ckpt_id = train_checkpoint(client, tmp_path, dataset_id=dataset_id)
    run_id = predict_run(client, tmp_path, ckpt_id, dataset_id)

    csv_resp = client.get(f"/runs/{run_id}/export.csv")
    assert csv_resp.status_code == 200
    header = csv_resp.text.splitlines()[0]
    assert header == "filename,predicted,actual_or_chosen,confidence_pct,significance_pct,lat,lon,maps_link"

    json_resp = client.get(f"/runs/{run_id}/export.json")
    assert json_resp.status_code == 200
    assert len(json_resp.json()["records"]) == 12

    # blob datasets carry no geo: the html map is a 422, not a crash
    assert client.get(f"/runs/{run_id}/export.html").status_code == 422


def test_run_to_dataset(client, tmp_path):
    dataset_id = upload_dataset(client, tmp_path, n=6, seed=12)
    ckpt_id = train_checkpoint(client, tmp_path, dataset_id=dataset_id)
    run_id = predict_run(client, tmp_path, ckpt_id, dataset_id)
    resp = client.post(f"/runs/{run_id}/to-dataset")
    assert resp.status_code == 201
    new_id = resp.json()["dataset_id"]
    patches = client.get(f"/datasets/{new_id}/patches").json()
    assert len(patches) == 12
    assert all(p["label"] in ("background", "target") for p in patches)


def test_checkpoint_listing_and_meta(client, tmp_path):
    ckpt_id = train_checkpoint(client, tmp_path)
    listing = client.get("/checkpoints").json()
    assert any(c["id"] == ckpt_id for c in listing)
    meta = client.get(f"/checkpoints/{ckpt_id}").json()
    assert meta["input_px"] == 12
    assert len(meta["history"]) == 4


def test_openapi_served(client):
    doc = client.get("/openapi.json").json()
    assert "/datasets" in doc["paths"]
    assert "/runs/{run_id}/filters" in doc["paths"]


def test_unknown_run_404(client):
    assert client.get("/runs/nope").status_code == 404
