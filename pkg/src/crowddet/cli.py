"""Command-line front end: synth, train, detect, eval, plot.

All commands are deterministic given their inputs and --seed, write a
manifest.json into their output directory, and exit nonzero with a
one-line diagnostic on any error. Config files are plain key=value text.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__
from .data import (
    EncoderConfig,
    SceneConfig,
    encode_scene,
    generate_scenes,
    read_predictions,
    read_scenes,
    write_predictions,
    write_scenes,
    Detection,
    ScenePredictions,
)
from .decoder import DecoderParams, decode_region, load_checkpoint, save_checkpoint
from .metrics import PRCurve, evaluate
from .stitching import stitch_image
from .trainer import TrainConfig, train


class CliError(Exception):
    pass


def _parse_kv_file(path: Path) -> Dict[str, str]:
    if not path.exists():
        raise CliError(f"config file not found: {path}")
    values: Dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise CliError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _coerce(value: str, target_type):
    if target_type is bool:
        low = value.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise CliError(f"expected a boolean, got {value!r}")
    return target_type(value)


def _dataclass_from_kv(cls, values: Dict[str, str], used: set):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in values:
            continue
        used.add(f.name)
        raw = values[f.name]
        if f.name == "count_weights":
            kwargs[f.name] = tuple(float(v) for v in raw.split(","))
        elif f.type in ("float", float):
            kwargs[f.name] = float(raw)
        elif f.type in ("int", int):
            kwargs[f.name] = int(raw)
        elif f.type in ("bool", bool):
            kwargs[f.name] = _coerce(raw, bool)
        else:
            kwargs[f.name] = raw
    return cls(**kwargs)


def load_train_config(path: Optional[Path], overrides: Dict[str, object]) -> TrainConfig:
    values = _parse_kv_file(path) if path else {}
    config = _dataclass_from_kv(TrainConfig, values, set())
    for key, value in overrides.items():
        if value is not None:
            config = dataclasses.replace(config, **{key: value})
    try:
        config.validate()
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    return config


def load_scene_config(path: Optional[Path]) -> SceneConfig:
    values = _parse_kv_file(path) if path else {}
    config = _dataclass_from_kv(SceneConfig, values, set())
    try:
        config.validate()
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    return config


def write_manifest(out_dir: Path, command: str, args: argparse.Namespace) -> None:
    manifest = {
        "command": command,
        "config": str(getattr(args, "config", None)),
        "seed": getattr(args, "seed", None),
        "inputs": {
            k: str(getattr(args, k))
            for k in ("data", "scenes", "checkpoint", "predictions")
            if getattr(args, k, None) is not None
        },
        "output": str(out_dir),
        "artifact_version": __version__,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _prepare_out_dir(path: Path, overwrite: bool) -> Path:
    if path.exists() and any(path.iterdir()) and not overwrite:
        raise CliError(f"output directory {path} is not empty (use --overwrite)")
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_synth(args: argparse.Namespace) -> None:
    out = _prepare_out_dir(Path(args.out), args.overwrite)
    config = load_scene_config(args.config)
    splits = (("train", args.train), ("val", args.val), ("test", args.test))
    for offset, (name, count) in enumerate(splits):
        scenes = generate_scenes(
            seed=args.seed + offset, count=count, config=config, id_prefix=name
        )
        write_scenes(scenes, out / f"{name}.ndjson")
    write_manifest(out, "synth", args)


def _metrics_csv(rows, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "lr", "val_ap"])
        for row in rows:
            writer.writerow(
                [row.iteration, repr(row.loss), repr(row.lr),
                 "" if row.val_ap is None else repr(row.val_ap)]
            )


def cmd_train(args: argparse.Namespace) -> None:
    out = _prepare_out_dir(Path(args.out), args.overwrite)
    config = load_train_config(
        args.config,
        {"loss_mode": args.loss_mode, "seed": args.seed, "iterations": args.iterations},
    )
    data_dir = Path(args.data)
    train_path = data_dir / "train.ndjson"
    val_path = data_dir / "val.ndjson"
    if not train_path.exists():
        raise CliError(f"missing training scenes: {train_path}")
    train_scenes = read_scenes(train_path)
    val_scenes = read_scenes(val_path) if val_path.exists() else []
    initial_params = initial_velocity = None
    start_iteration = 0
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        initial_params = ckpt.params
        initial_velocity = ckpt.velocity
        start_iteration = ckpt.iteration
    result = train(
        config,
        train_scenes,
        val_scenes,
        initial_params=initial_params,
        initial_velocity=initial_velocity,
        start_iteration=start_iteration,
    )
    save_checkpoint(
        result.params,
        out / "checkpoint.json",
        velocity=result.velocity,
        iteration=result.end_iteration,
    )
    _metrics_csv(result.log, out / "metrics.csv")
    write_manifest(out, "train", args)


def cmd_detect(args: argparse.Namespace) -> None:
    out = _prepare_out_dir(Path(args.out), args.overwrite)
    if not Path(args.checkpoint).exists():
        raise CliError(f"checkpoint not found: {args.checkpoint}")
    if not Path(args.scenes).exists():
        raise CliError(f"scenes file not found: {args.scenes}")
    params = load_checkpoint(args.checkpoint).params
    cfg = params.config
    grid_size = int(round(cfg.feature_dim ** 0.5))
    encoder = EncoderConfig(
        region_size=cfg.region_size, grid_size=grid_size, bump_sigma=args.bump_sigma
    )
    scenes = read_scenes(args.scenes)
    predictions: List[ScenePredictions] = []
    for scene in scenes:
        region_preds = [
            decode_region(params, s.features, region_origin=s.region_origin)
            for s in encode_scene(scene, encoder, args.stride)
        ]
        detections = stitch_image(region_preds, args.threshold)
        predictions.append(ScenePredictions(scene.id, detections))
    write_predictions(predictions, out / "predictions.ndjson")
    write_manifest(out, "detect", args)


def _pr_csv(curve: PRCurve, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "precision", "recall"])
        for p in curve.points:
            writer.writerow([repr(p.threshold), repr(p.precision), repr(p.recall)])


def cmd_eval(args: argparse.Namespace) -> None:
    out = _prepare_out_dir(Path(args.out), args.overwrite)
    for path in (args.predictions, args.scenes):
        if not Path(path).exists():
            raise CliError(f"input file not found: {path}")
    predictions = read_predictions(args.predictions)
    scenes = read_scenes(args.scenes)
    preds_by_scene = {
        p.scene_id: [(d.geometry, d.confidence) for d in p.detections] for p in predictions
    }
    gt_by_scene = {s.id: s.boxes for s in scenes}
    summary, curve = evaluate(preds_by_scene, gt_by_scene)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(summary), fh, sort_keys=True)
        fh.write("\n")
    _pr_csv(curve, out / "pr_curve.csv")
    write_manifest(out, "eval", args)


def _draw_overlays(scenes_path: Path, predictions_path: Optional[Path], out: Path, limit: int):
    from PIL import Image, ImageDraw

    scenes = read_scenes(scenes_path)
    preds = {}
    if predictions_path is not None:
        preds = {p.scene_id: p.detections for p in read_predictions(predictions_path)}
    for scene in scenes[:limit]:
        img = Image.new("RGB", (int(scene.width), int(scene.height)), "black")
        draw = ImageDraw.Draw(img)
        for b in scene.boxes:
            draw.rectangle([b.x_min, b.y_min, b.x_max, b.y_max], outline="green")
        for d in preds.get(scene.id, []):
            g = d.geometry
            if g.w > 0 and g.h > 0:
                draw.rectangle([g.x_min, g.y_min, g.x_max, g.y_max], outline="red")
        img.save(out / f"overlay_{scene.id}.png")


def cmd_plot(args: argparse.Namespace) -> None:
    out = _prepare_out_dir(Path(args.out), args.overwrite)
    if args.pr is not None:
        src = Path(args.pr)
        if not src.exists():
            raise CliError(f"PR curve file not found: {src}")
        (out / "pr_curve.csv").write_text(src.read_text(encoding="utf-8"), encoding="utf-8")
    if args.metrics is not None:
        src = Path(args.metrics)
        if not src.exists():
            raise CliError(f"metrics file not found: {src}")
        with open(src, encoding="utf-8", newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if r.get("val_ap")]
        with open(out / "training_curve.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "loss", "val_ap"])
            for r in rows:
                writer.writerow([r["iteration"], r["loss"], r["val_ap"]])
    if args.scenes is not None:
        _draw_overlays(
            Path(args.scenes),
            Path(args.predictions) if args.predictions else None,
            out,
            args.overlay_limit,
        )
    write_manifest(out, "plot", args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowddet",
        description="Train and evaluate a recurrent set-prediction box detector "
        "on synthetic crowded scenes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate train/val/test scene datasets")
    p.add_argument("--out", required=True)
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", type=int, default=200)
    p.add_argument("--val", type=int, default=50)
    p.add_argument("--test", type=int, default=50)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a decoder and write checkpoint + metrics")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--loss-mode", choices=("fix", "firstk", "hungarian"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--resume", default=None)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="decode and stitch scenes into predictions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--stride", type=float, default=32.0)
    p.add_argument("--bump-sigma", type=float, default=8.0,
                   help="feature rasterizer bump width; must match training")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--predictions", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="export plot-ready CSVs and box overlays")
    p.add_argument("--pr", default=None, help="pr_curve.csv from eval")
    p.add_argument("--metrics", default=None, help="metrics.csv from train")
    p.add_argument("--scenes", default=None)
    p.add_argument("--predictions", default=None)
    p.add_argument("--overlay-limit", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    if os.environ.get("CROWDDET_VERBOSE"):
        import logging

        logging.basicConfig(level=logging.DEBUG)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (CliError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
