import json

import numpy as np
import pytest

from landpatch.augment import AugmentSpec
from landpatch.cli import main
from landpatch.imagery import save_png
from landpatch.nn import TrainConfig
from conftest import blob_dataset, rand_image, write_dataset_tree


def write_blob_tree(tmp_path, n=6, side=12, seed=0):
    from landpatch.dataset import export_folder

    ds = blob_dataset(n_per_class=n, side=side, seed=seed)
    export_folder(ds, tmp_path)
    return tmp_path


def test_grid_manifest_row_count(tmp_path, capsys):
    assert main(["grid", "--ne", "34.95,33.05"]) == 0
    out = capsys.readouterr().out
    rows = [ln for ln in out.splitlines() if ln and not ln.startswith("#") and not ln.startswith("filename")]
    assert len(rows) == 1296
    assert rows[0].startswith("r00_c00.png,")


def test_grid_json_mode(capsys):
    assert main(["grid", "--ne", "10,20", "--n", "4", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["cells"] == 16
    assert len(doc["rows"]) == 16


def test_grid_bad_ne_is_data_error(capsys):
    assert main(["grid", "--ne", "not-a-coordinate"]) == 3
    assert "error" in capsys.readouterr().err


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["grid"])  # missing --ne
    assert exc.value.code == 2


def test_split_zero_patches_notice(tmp_path, capsys):
    rng = np.random.default_rng(0)
    img_path = tmp_path / "small.png"
    save_png(rng.integers(0, 256, size=(199, 199, 3), dtype=np.uint8), img_path)
    assert main(["split", "--image", str(img_path), "--patch-px", "200",
                 "--out", str(tmp_path / "patches")]) == 0
    assert "0 patches" in capsys.readouterr().out


def test_split_writes_patches(tmp_path, capsys):
    rng = np.random.default_rng(1)
    img_path = tmp_path / "big.png"
    save_png(rand_image(rng, 30), img_path)
    out = tmp_path / "patches"
    assert main(["split", "--image", str(img_path), "--patch-px", "10",
                 "--out", str(out), "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["patches"] == 9
    assert len(list(out.glob("*.png"))) == 9


def test_augment_command(tmp_path, capsys):
    src = write_blob_tree(tmp_path / "src", n=3)
    spec_path = tmp_path / "augment.json"
    spec_path.write_text(AugmentSpec(rotation_max_deg=10, copies_per_image=2, seed=1).to_json())
    out = tmp_path / "augmented"
    assert main(["augment", "--in", str(src), "--spec", str(spec_path), "--out", str(out)]) == 0
    assert (out / "augment.json").is_file()
    total = sum(1 for _ in out.rglob("*.png"))
    assert total == 6 * 3  # originals + 2 copies each


def test_train_test_predict_export_flow(tmp_path, capsys):
    train_dir = write_blob_tree(tmp_path / "train", n=8, seed=2)
    test_dir = write_blob_tree(tmp_path / "test", n=3, seed=3)
    model = tmp_path / "model.dtck"
    cfg = tmp_path / "train.json"
    cfg.write_text(TrainConfig(max_epochs=6, batch_size=4, early_stopping_patience=0,
                               learning_rate=1e-3, seed=4).to_json())

    assert main(["train", "--in", str(train_dir), "--config", str(cfg),
                 "--out", str(model), "--json"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert model.is_file()
    assert json.loads(lines[-1])["epochs"] == 6
    assert sum(1 for ln in lines if ln.startswith("epoch ")) == 6

    report = tmp_path / "report.json"
    assert main(["test", "--model", str(model), "--in", str(test_dir),
                 "--report", str(report), "--json"]) == 0
    doc = json.loads(report.read_text())
    assert doc["total"] == 6
    assert "metrics" in doc and "confusion" in doc

    run_dir = tmp_path / "run"
    assert main(["predict", "--model", str(model), "--in", str(test_dir),
                 "--out", str(run_dir), "--json"]) == 0
    assert (run_dir / "run.json").is_file()

    for fmt, name in (("csv", "out.csv"), ("json", "out.json"), ("html", "map.html")):
        out_file = tmp_path / name
        code = main(["export", "--run", str(run_dir), "--format", fmt, "--out", str(out_file)])
        if fmt == "html":
            # blob dataset has no geo tags: html export is a data error
            assert code == 3
        else:
            assert code == 0 and out_file.is_file()


def test_train_invalid_config_field_message(tmp_path, capsys):
    train_dir = write_blob_tree(tmp_path / "train", n=3)
    cfg = tmp_path / "train.json"
    cfg.write_text('{"max_epochs": 0}')
    assert main(["train", "--in", str(train_dir), "--config", str(cfg),
                 "--out", str(tmp_path / "m.dtck")]) == 3
    assert "max_epochs" in capsys.readouterr().err


def test_predict_flat_patch_dir(tmp_path, capsys):
    train_dir = write_blob_tree(tmp_path / "train", n=6, seed=5)
    model = tmp_path / "model.dtck"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(TrainConfig(max_epochs=2, batch_size=4, seed=1,
                               early_stopping_patience=0).to_json())
    assert main(["train", "--in", str(train_dir), "--config", str(cfg), "--out", str(model)]) == 0

    rng = np.random.default_rng(6)
    flat = tmp_path / "flat"
    flat.mkdir()
    for i in range(4):
        save_png(rand_image(rng, 12), flat / f"p{i}.png")
    assert main(["predict", "--model", str(model), "--in", str(flat),
                 "--out", str(tmp_path / "run2")]) == 0
    doc = json.loads((tmp_path / "run2" / "run.json").read_text())
    assert len(doc["records"]) == 4


def test_missing_image_is_io_error(tmp_path, capsys):
    assert main(["split", "--image", str(tmp_path / "nope.png"), "--out", str(tmp_path)]) in (3, 4)


def test_fetch_command(tmp_path, capsys):
    rng = np.random.default_rng(7)
    tiles = tmp_path / "tiles"
    tiles.mkdir()
    for r in range(2):
        for c in range(2):
            save_png(rand_image(rng, 8), tiles / f"r{r:02d}_c{c:02d}.png")
    src_cfg = tmp_path / "source.json"
    src_cfg.write_text(json.dumps({"kind": "file-directory", "root_or_url": str(tiles)}))
    out = tmp_path / "fetched"
    assert main(["fetch", "--source", str(src_cfg), "--ne", "34.95,33.05",
                 "--n", "2", "--patch-px", "8", "--out", str(out)]) == 0
    assert len(list(out.glob("r*_c*.png"))) == 4
    assert (out / "manifest.csv").is_file()
    assert "4 patches fetched" in capsys.readouterr().out
