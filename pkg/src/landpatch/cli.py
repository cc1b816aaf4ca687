"""Command-line front door for every pipeline stage.

Exit codes: 0 success, 2 usage, 3 data error, 4 I/O or transfer failure.
Reporting subcommands accept --json for machine-readable output.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import DataError, TransferError


def _parse_ne(text: str):
    from .geogrid import GeoPoint

    try:
        lat_s, lon_s = text.split(",")
        return GeoPoint(float(lat_s), float(lon_s))
    except (ValueError, TypeError) as exc:
        raise DataError(f"--ne must be LAT,LON: {text!r}: {exc}") from exc


def grid_manifest_text(grid) -> str:
    from .dataset import write_manifest

    area = grid.area
    rows = []
    for cell in grid:
        rows.append((f"r{cell.row:02d}_c{cell.col:02d}.png", "", cell.center))
    comments = [
        f"grid: ne={area.ne_corner.lat:.6f},{area.ne_corner.lon:.6f} side_m={area.side_m:g} "
        f"n={area.grid_n} patch_px={area.patch_px}",
        "orientation: cell (0,0) at the NE anchor; rows grow south, columns grow west",
        "coordinate: cell center",
    ]
    return write_manifest(rows, comments=comments)


def cmd_grid(args) -> int:
    from .geogrid import AreaSpec, build_grid

    area = AreaSpec(_parse_ne(args.ne), side_m=args.side_m, grid_n=args.n, patch_px=args.patch_px)
    grid = build_grid(area)
    if args.json:
        doc = {
            "cells": len(grid),
            "grid_n": area.grid_n,
            "patch_px": area.patch_px,
            "rows": [
                {
                    "row": c.row,
                    "col": c.col,
                    "lat": round(c.center.lat, 6),
                    "lon": round(c.center.lon, 6),
                }
                for c in grid
            ],
        }
        text = json.dumps(doc, indent=2)
    else:
        text = grid_manifest_text(grid)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return 0


def cmd_fetch(args) -> int:
    from .dataset import write_manifest
    from .geogrid import AreaSpec
    from .imagery import TileSourceConfig, fetch_area, save_png

    cfg = json.loads(Path(args.source).read_text(encoding="utf-8"))
    src = TileSourceConfig(**cfg)
    area = AreaSpec(_parse_ne(args.ne), side_m=args.side_m, grid_n=args.n, patch_px=args.patch_px)
    result = fetch_area(src, area)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for p in result.patches:
        name = f"r{p.meta.row:02d}_c{p.meta.col:02d}.png"
        save_png(p.image, out / name)
        rows.append((name, "", p.meta.center))
    (out / "manifest.csv").write_text(write_manifest(rows), encoding="utf-8")
    for f in result.failures:
        print(f"failed r{f.row:02d}c{f.col:02d}: {f.reason}", file=sys.stderr)
    print(f"{len(result.patches)} patches fetched, {len(result.failures)} failures -> {out}")
    return 0


def cmd_split(args) -> int:
    from .imagery import load_image, save_png, split_image

    img = load_image(args.image)
    ps = split_image(img, args.patch_px, origin=Path(args.image).stem)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in ps.patches:
        save_png(p.image, out / p.filename)
    if args.json:
        print(json.dumps({"patches": len(ps), "patch_px": ps.patch_px, "out": str(out)}))
    else:
        print(f"{len(ps)} patches ({ps.patch_px} px) -> {out}")
    return 0


def cmd_augment(args) -> int:
    from .augment import AugmentSpec, augment_dataset, write_spec
    from .dataset import export_folder, import_folder

    spec = AugmentSpec.from_json(Path(args.spec).read_text(encoding="utf-8"))
    ds = import_folder(args.in_dir)
    out_ds = augment_dataset(ds, spec)
    export_folder(out_ds, args.out)
    write_spec(spec, args.out)
    print(f"{len(ds)} -> {len(out_ds)} images ({spec.copies_per_image} copies per image) -> {args.out}")
    return 0


def cmd_train(args) -> int:
    from .dataset import import_archive, import_folder
    from .nn import TrainConfig, build_architecture, save_checkpoint, train

    cfg = TrainConfig.from_json(Path(args.config).read_text(encoding="utf-8")) if args.config else TrainConfig()
    src = Path(args.in_dir)
    ds = import_archive(src) if src.is_file() else import_folder(src)
    side, _ = ds.image_size()
    spec = build_architecture(args.arch, side)

    def report(stats):
        print(
            f"epoch {stats.epoch}: loss {stats.train_loss:.4f} acc {stats.train_accuracy:.3f} "
            f"val_loss {stats.val_loss:.4f} val_acc {stats.val_accuracy:.3f}"
        )

    ckpt = train(ds, spec, cfg, progress=report)
    save_checkpoint(ckpt, args.out)
    best = ckpt.history[ckpt.best_epoch - 1] if ckpt.best_epoch else None
    if args.json:
        print(json.dumps({
            "epochs": len(ckpt.history),
            "best_epoch": ckpt.best_epoch,
            "best_val_loss": best.val_loss if best else None,
            "out": str(args.out),
        }))
    else:
        print(f"saved {args.out} (best epoch {ckpt.best_epoch})")
    return 0


def cmd_test(args) -> int:
    from .dataset import import_archive, import_folder
    from .inference import run, summarize
    from .nn import load_checkpoint

    ckpt = load_checkpoint(args.model)
    src = Path(args.in_dir)
    ds = import_archive(src) if src.is_file() else import_folder(src)
    r = run(ckpt, ds, mode="test", compute_significance=args.significance,
            checkpoint_id=Path(args.model).stem)
    summary = summarize(r)
    doc = summary.to_dict()
    if args.report:
        Path(args.report).write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
    if args.json:
        print(json.dumps(doc, sort_keys=True))
    else:
        m = summary.metrics
        print(f"{summary.total} records; accuracy {m.accuracy:.4f} mcc {m.mcc:.4f}")
    return 0


def cmd_predict(args) -> int:
    from .dataset import import_archive, import_folder
    from .errors import DataError as _DataError
    from .imagery import load_patch_dir
    from .inference import run, save_run, summarize
    from .nn import load_checkpoint

    ckpt = load_checkpoint(args.model)
    src = Path(args.in_dir)
    if src.is_file():
        inputs = import_archive(src)
    else:
        try:
            inputs = import_folder(src)
        except _DataError:
            inputs = load_patch_dir(src)
    r = run(ckpt, inputs, mode="predict", compute_significance=args.significance,
            checkpoint_id=Path(args.model).stem)
    save_run(r, args.out)
    summary = summarize(r)
    if args.json:
        print(json.dumps(summary.to_dict(), sort_keys=True))
    else:
        parts = ", ".join(f"{k}: {summary.displayed[k]}" for k in r.label_order)
        print(f"{summary.total} records ({parts}) -> {args.out}")
    return 0


def cmd_export(args) -> int:
    from .export import to_csv, to_html_map, to_json
    from .inference import load_run

    r = load_run(args.run)
    if args.format == "csv":
        to_csv(r, args.out)
    elif args.format == "json":
        to_json(r, args.out)
    else:
        to_html_map(r, args.out, positive_only=args.positive_only)
    print(f"{len(r)} records -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port = args.bind.rpartition(":")
    app = create_app(workspace_dir=args.workspace, static_dir=args.static)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="landpatch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid", help="print the patch-grid manifest for a survey area")
    p.add_argument("--ne", required=True, help="north-east corner as LAT,LON")
    p.add_argument("--side-m", type=float, default=1000.0)
    p.add_argument("--n", type=int, default=36, help="grid cells per side")
    p.add_argument("--patch-px", type=int, default=200)
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("fetch", help="fetch patches for an area from a tile source")
    p.add_argument("--source", required=True, help="tile source config JSON file")
    p.add_argument("--ne", required=True)
    p.add_argument("--side-m", type=float, default=1000.0)
    p.add_argument("--n", type=int, default=36)
    p.add_argument("--patch-px", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fetch)

    p = sub.add_parser("split", help="split a large image into patches")
    p.add_argument("--image", required=True)
    p.add_argument("--patch-px", type=int, default=200)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("augment", help="expand a labeled dataset with transformed variants")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--spec", required=True, help="augment spec JSON file")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("train", help="train the small CNN on a labeled dataset")
    p.add_argument("--in", dest="in_dir", required=True, help="dataset folder or .tgz")
    p.add_argument("--config", help="train config JSON file")
    p.add_argument("--arch", default="convnet")
    p.add_argument("--out", required=True, help="checkpoint path (.dtck)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("test", help="evaluate a checkpoint on a labeled dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--report", help="write summary JSON here")
    p.add_argument("--significance", action="store_true", help="compute occlusion significance")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_test)

    p = sub.add_parser("predict", help="predict a folder/archive of patches")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--significance", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("export", help="export a run as CSV, JSON, or an HTML map")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--format", required=True, choices=("csv", "json", "html"))
    p.add_argument("--out", required=True)
    p.add_argument("--positive-only", action="store_true")
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--workspace", required=True)
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--static", help="directory with the built web UI, served at /")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (TransferError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
