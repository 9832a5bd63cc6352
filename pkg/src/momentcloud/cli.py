"""Command-line harness.

Subcommands: toy-x2, toy-spiral, moments, build-dataset, train, eval,
sweep. Every command is deterministic given its flags and config; seeds
default to fixed values, never the clock. Results land as JSON and CSV
in the chosen output directory; on failure the process exits nonzero
after writing a machine-readable error object to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields as dataclass_fields

import numpy as np

from . import dataio, experiments, geometry
from .model import (ModelConfig, TrainConfig, evaluate, init_parameters,
                    robustness_sweep, train_classifier)
from .nncore import load_checkpoint, parameter, save_checkpoint


def _round12(value: float) -> float:
    return float(f"{value:.12g}")


def _json_ready(obj):
    if isinstance(obj, float):
        return _round12(obj)
    if isinstance(obj, np.floating):
        return _round12(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    return obj


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_ready(payload), fh, indent=1)
        fh.write("\n")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def parse_grid(text: str, *, modulo: float | None = None) -> list[float]:
    """Parse 'start:stop:step' into an inclusive grid.

    With modulo set (y-angle grids), values reduce mod `modulo` and
    duplicates drop, so 0:360:30 yields 0..330.
    """
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid {text!r} must be start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ValueError(f"grid {text!r} has non-numeric fields") from None
    if step <= 0 or stop < start:
        raise ValueError(f"grid {text!r} must have step > 0 and stop >= start")
    values = []
    v = start
    while v <= stop + 1e-9:
        values.append(round(v, 12))
        v = start + (len(values)) * step
    if modulo is not None:
        seen, reduced = set(), []
        for v in values:
            r = round(v % modulo, 12)
            if r not in seen:
                seen.add(r)
                reduced.append(r)
        values = reduced
    return values


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# experiment commands

def cmd_toy_x2(args) -> int:
    out = _ensure_out(args.out)
    depths = [int(d) for d in args.depths.split(",")]
    if any(d < 1 for d in depths):
        raise ValueError("depths must be >= 1")
    records = experiments.square_depth_study(depths, args.runs, args.seed,
                                             max_steps=args.max_steps)
    _write_csv(os.path.join(out, "x2_runs.csv"), ["depth", "run", "linf"],
               [(r["depth"], r["run"], f"{r['linf']:.9g}") for r in records])
    summary = {"seed": args.seed, "runs": args.runs, "per_depth": {}}
    for depth in depths:
        values = sorted(r["linf"] for r in records if r["depth"] == depth)
        summary["per_depth"][str(depth)] = {
            "linf_values": values,
            "best": values[0],
            "median": float(np.median(values)),
        }
    _write_json(os.path.join(out, "x2_summary.json"), summary)
    print(json.dumps(_json_ready(summary)))
    return 0


def cmd_toy_spiral(args) -> int:
    out = _ensure_out(args.out)
    result = experiments.train_spiral(args.lift, args.seed, hidden=args.hidden,
                                      steps=args.steps)
    grid = experiments.decision_grid(result["params"], args.lift)
    _write_csv(os.path.join(out, "spiral_grid.csv"), ["x", "y", "prob"],
               [(f"{x:.6g}", f"{y:.6g}", f"{p:.6g}") for x, y, p in grid])
    payload = {k: result[k] for k in ("with_lift", "seed", "hidden", "steps",
                                      "accuracy", "loss")}
    _write_json(os.path.join(out, "spiral_metrics.json"), payload)
    print(json.dumps(_json_ready(payload)))
    return 0


def cmd_moments(args) -> int:
    cloud = dataio.read_cloud(args.cloud)
    summary = geometry.principal_directions(cloud)
    payload = {
        "file": args.cloud,
        "count": int(cloud.shape[0]),
        "centroid": summary.centroid,
        "second_moment": summary.sigma,
        "eigenvalues": summary.eigenvalues,
        "directions": summary.directions,
        "degenerate_pairs": list(summary.degenerate_pairs),
    }
    text = json.dumps(_json_ready(payload), indent=1)
    print(text)
    if args.out:
        _ensure_out(args.out)
        with open(os.path.join(args.out, "moments.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


# ---------------------------------------------------------------------------
# dataset / training commands

def cmd_build_dataset(args) -> int:
    classes = tuple(args.classes.split(",")) if args.classes else dataio.SHAPE_KINDS
    manifest = dataio.build_benchmark(
        _ensure_out(args.out), classes=classes,
        samples_per_class=args.samples_per_class, num_points=args.points,
        seed=args.seed, noise_sigma=args.noise)
    counts = {s: len(manifest.split_entries(s)) for s in ("train", "test")}
    print(json.dumps({"classes": list(manifest.classes), "seed": manifest.seed,
                      "train": counts["train"], "test": counts["test"],
                      "manifest": os.path.join(args.out, "manifest.json")}))
    return 0


_MODEL_FIELDS = {f.name for f in dataclass_fields(ModelConfig)}
_TRAIN_FIELDS = {f.name for f in dataclass_fields(TrainConfig)}


def _config_from_sections(model_section: dict, train_section: dict,
                          manifest: dataio.DatasetManifest,
                          sample_points: int) -> tuple[ModelConfig, TrainConfig]:
    for key in model_section:
        if key not in _MODEL_FIELDS:
            raise ValueError(f"config field 'model.{key}' is not recognized")
    for key in train_section:
        if key not in _TRAIN_FIELDS:
            raise ValueError(f"config field 'train.{key}' is not recognized")
    model_section.setdefault("num_points", sample_points)
    model_section.setdefault("num_classes", len(manifest.classes))
    for tuple_key in ("trunk_widths", "head_widths"):
        if tuple_key in model_section:
            model_section[tuple_key] = tuple(model_section[tuple_key])
    cfg = ModelConfig(**model_section)
    tcfg = TrainConfig(**train_section)
    cfg.validate()
    tcfg.validate()
    return cfg, tcfg


def _load_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    for key in doc:
        if key not in ("manifest", "out", "seed", "model", "train"):
            raise ValueError(f"config field {key!r} is not recognized")
    return doc


def cmd_train(args) -> int:
    doc = _load_config_file(args.config) if args.config else {}
    manifest_path = args.manifest or doc.get("manifest")
    if not manifest_path:
        raise ValueError("config field 'manifest' is required (or pass --manifest)")
    out = _ensure_out(args.out or doc.get("out") or "train_out")
    manifest = dataio.load_manifest(manifest_path)
    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    train_set = dataio.load_split(manifest, "train", base_dir)
    test_set = dataio.load_split(manifest, "test", base_dir)

    model_section = dict(doc.get("model", {}))
    train_section = dict(doc.get("train", {}))
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    model_section.setdefault("seed", seed)
    train_section.setdefault("seed", seed)
    if args.epochs is not None:
        train_section["epochs"] = args.epochs
    if args.batch_size is not None:
        train_section["batch_size"] = args.batch_size
    if args.no_lift:
        model_section["use_lift"] = False
    if args.no_tnet:
        model_section["use_tnet"] = False
    if args.no_knn:
        model_section["use_knn"] = False
    if args.order:
        model_section["polynomial_order"] = args.order
    cfg, tcfg = _config_from_sections(model_section, train_section, manifest,
                                      train_set[0][0].shape[0])

    result = train_classifier(cfg, tcfg, train_set, test_set)
    save_checkpoint(os.path.join(out, "checkpoint.mmnt"), result.params)
    _write_json(os.path.join(out, "metrics.json"), result.history)
    _write_csv(os.path.join(out, "curves.csv"), ["epoch", "loss", "acc"],
               [(e, f"{l:.9g}", f"{a:.9g}") for e, l, a in result.curves])
    _write_json(os.path.join(out, "run_config.json"), {
        "manifest": manifest_path, "seed": seed,
        "model": {f.name: getattr(cfg, f.name) for f in dataclass_fields(ModelConfig)},
        "train": {f.name: getattr(tcfg, f.name) for f in dataclass_fields(TrainConfig)},
    })
    final = result.history[-1]
    print(json.dumps(_json_ready({"steps": result.steps, "final": final})))
    return 0


def _restore_model(checkpoint_path: str, manifest: dataio.DatasetManifest,
                   sample_points: int) -> tuple[dict, ModelConfig]:
    run_config = os.path.join(os.path.dirname(os.path.abspath(checkpoint_path)),
                              "run_config.json")
    if not os.path.exists(run_config):
        raise ValueError(f"missing run_config.json next to {checkpoint_path}")
    with open(run_config, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    cfg, _ = _config_from_sections(dict(doc["model"]), dict(doc["train"]),
                                   manifest, sample_points)
    weights = load_checkpoint(checkpoint_path)
    fresh = init_parameters(cfg)
    if set(weights) != set(fresh):
        raise ValueError("checkpoint parameters do not match the model config")
    params = {}
    for name, tensor in fresh.items():
        if weights[name].shape != tensor.data.shape:
            raise ValueError(f"checkpoint tensor {name!r} has wrong shape")
        params[name] = parameter(weights[name], name)
    return params, cfg


def cmd_eval(args) -> int:
    manifest = dataio.load_manifest(args.manifest)
    base_dir = os.path.dirname(os.path.abspath(args.manifest))
    samples = dataio.load_split(manifest, args.split, base_dir)
    params, cfg = _restore_model(args.checkpoint, manifest, samples[0][0].shape[0])
    record = evaluate(params, cfg, samples).as_record(-1, args.split)
    if args.out:
        _write_json(os.path.join(_ensure_out(args.out), "metrics.json"), [record])
    print(json.dumps(_json_ready(record)))
    return 0


def cmd_sweep(args) -> int:
    if not args.dropout and not args.yangle:
        raise ValueError("sweep needs --dropout and/or --yangle grids")
    manifest = dataio.load_manifest(args.manifest)
    base_dir = os.path.dirname(os.path.abspath(args.manifest))
    samples = dataio.load_split(manifest, args.split, base_dir)
    params, cfg = _restore_model(args.checkpoint, manifest, samples[0][0].shape[0])
    out = _ensure_out(args.out)
    emitted = {}
    if args.dropout:
        rows = robustness_sweep(params, cfg, samples, seed=args.seed,
                                dropout_ratios=parse_grid(args.dropout))
        path = os.path.join(out, "sweep_dropout.csv")
        _write_csv(path, ["value", "overall", "mean_class"],
                   [(r["value"], f"{r['overall']:.9g}", f"{r['mean_class']:.9g}")
                    for r in rows])
        emitted["dropout"] = path
    if args.yangle:
        rows = robustness_sweep(params, cfg, samples, seed=args.seed,
                                y_angles_deg=parse_grid(args.yangle, modulo=360.0))
        path = os.path.join(out, "sweep_yangle.csv")
        _write_csv(path, ["value", "overall", "mean_class"],
                   [(r["value"], f"{r['overall']:.9g}", f"{r['mean_class']:.9g}")
                    for r in rows])
        emitted["yangle"] = path
    print(json.dumps(emitted))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momentcloud",
        description="Moment-lifted point cloud classification experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy-x2", help="fit x^2 with ReLU nets of varying depth")
    p.add_argument("--depths", default="1,2,6", help="comma list of hidden-layer counts")
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--max-steps", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_toy_x2)

    p = sub.add_parser("toy-spiral", help="two-spiral classification toy")
    p.add_argument("--lift", action=argparse.BooleanOptionalAction, default=True,
                   help="append x^2, y^2, xy to the inputs")
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--steps", type=int, default=6000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_toy_spiral)

    p = sub.add_parser("moments", help="print moment summary of a cloud file")
    p.add_argument("cloud")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("build-dataset", help="materialize the synthetic benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", default=None, help="comma list, default all 8 kinds")
    p.add_argument("--samples-per-class", type=int, default=100)
    p.add_argument("--points", type=int, default=256)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="train the classifier on a manifest dataset")
    p.add_argument("--config", default=None, help="JSON experiment config")
    p.add_argument("--manifest", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--order", default=None, choices=("2", "3", "2+3", "learnable"))
    p.add_argument("--no-lift", action="store_true")
    p.add_argument("--no-tnet", action="store_true")
    p.add_argument("--no-knn", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="robustness curves for a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--dropout", default=None, help="grid start:stop:step")
    p.add_argument("--yangle", default=None, help="grid start:stop:step in degrees")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
