"""Command line entry point wiring the whole pipeline.

Verbs: synth (generate a dataset), convert (dump filled+normalized tensors),
train (k-fold cross-validated training), eval (score a checkpoint), predict
(write predictions CSV), plot (re-render curves from a report).

Every run writes a report.json into its output directory echoing the full
effective configuration, including defaulted values. Exit codes: 0 success,
1 invalid input (bad flags, malformed files, impossible configuration),
2 runtime failure (divergence, I/O errors mid-run).

PBMR_SEED in the environment supplies the seed when --seed is omitted.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, metrics
from .imageize import NormalizationError, normalize
from .ingest import (DatasetError, SynthSpec, forward_fill, generate_synthetic,
                     load_dataset_dir, save_dataset)
from .metrics import MetricsError, MetricsReport, render_curves
from .model import ConfigError, arch_config
from .optim import OptimizerConfig, OptimizerError
from .trainer import (CheckpointError, TrainConfig, TrainingDivergedError,
                      TrainingError, load_checkpoint, predict, save_checkpoint,
                      train)

_INPUT_ERRORS = (DatasetError, NormalizationError, ConfigError,
                 OptimizerError, TrainingError, CheckpointError, MetricsError)


def _resolve_seed(value) -> int:
    if value is not None:
        return value
    env = os.environ.get("PBMR_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise TrainingError(f"PBMR_SEED={env!r} is not an integer") from None
    return 0


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _report(out_dir: Path, command: str, config: dict, extra: dict = None) -> None:
    doc = {"command": command, "version": __version__, "config": config}
    if extra:
        doc.update(extra)
    _write_json(out_dir / "report.json", doc)


def _cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    spec = SynthSpec(sensors=args.sensors, time_steps=args.time_steps,
                     samples=args.samples, missing_rate=args.missing_rate,
                     noise=args.noise)
    manifest, frames = generate_synthetic(spec, seed)
    out = Path(args.out)
    save_dataset(manifest, frames, out)
    _report(out, "synth", {**asdict(spec), "seed": seed, "out": str(out)},
            {"outputs": ["manifest.json", "samples.csv", "targets.csv"]})
    print(f"wrote {args.samples} samples ({args.sensors}x{args.time_steps}) "
          f"to {out}")
    return 0


def _cmd_convert(args) -> int:
    manifest, frames = load_dataset_dir(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    fill_counts = {s.name: 0 for s in manifest.sensors}
    entries = []
    blobs = []
    offset = 0
    for frame in frames:
        per_row = frame.missing.sum(axis=1)
        for sensor, count in zip(manifest.sensors, per_row):
            fill_counts[sensor.name] += int(count)
        tensor = normalize(forward_fill(frame), manifest, args.channels)
        data = np.ascontiguousarray(tensor.data, dtype="<f4")
        entries.append({"sample_id": frame.sample_id,
                        "shape": list(data.shape), "offset": offset})
        blobs.append(data.tobytes())
        offset += len(blobs[-1])

    (out / "tensors.bin").write_bytes(b"".join(blobs))
    _write_json(out / "tensors.json",
                {"version": 1, "dtype": "<f4", "entries": entries})
    _write_json(out / "summary.json",
                {"filled_cells": fill_counts,
                 "total_filled": sum(fill_counts.values()),
                 "samples": len(frames)})
    config = {"data": str(args.data), "out": str(out),
              "channels": args.channels}
    _report(out, "convert", config,
            {"outputs": ["tensors.json", "tensors.bin", "summary.json"]})
    print(f"converted {len(frames)} samples; filled "
          f"{sum(fill_counts.values())} missing cells")
    return 0


def _train_setup(args) -> tuple[TrainConfig, dict]:
    seed = _resolve_seed(args.seed)
    arch = arch_config(args.arch, channels_in=args.channels,
                       head_hidden=args.head_hidden)
    opt = OptimizerConfig(kind=args.optimizer, lr=args.lr,
                          momentum=args.momentum,
                          betas=(args.beta1, args.beta2), eps=args.eps,
                          trust_coefficient=args.trust_coefficient,
                          weight_decay=args.weight_decay)
    jobs = args.jobs if args.jobs is not None else \
        max(1, min(args.folds, os.cpu_count() or 1))
    config = TrainConfig(lr=args.lr, batch_size=args.batch_size,
                         epochs=args.epochs, loss=args.loss, folds=args.folds,
                         seed=seed, optimizer=opt, arch=arch, jobs=jobs)
    echo = {
        "data": str(args.data), "out": str(args.out),
        "lr": config.lr, "batch_size": config.batch_size,
        "epochs": config.epochs, "loss": config.loss, "folds": config.folds,
        "seed": config.seed, "jobs": config.jobs,
        "optimizer": asdict(config.optimizer),
        "arch": asdict(config.arch),
    }
    return config, echo


def _cmd_train(args) -> int:
    config, echo = _train_setup(args)
    dataset = load_dataset_dir(args.data)
    out = Path(args.out)
    nets, report = train(dataset, config, out_dir=out)
    render_curves(report, out)
    _report(out, "train", echo, report.to_dict())
    s, b = report.summary, report.baselines
    print(f"cross-validated summary: MAE {s.mae:.6g}  RMSE {s.rmse:.6g}  "
          f"R2 {s.r2:.6g}")
    print(f"baselines: mean-predictor MAE {b.mean_predictor_mae:.6g}; "
          f"linear regression MAE {b.linreg_mae:.6g} "
          f"RMSE {b.linreg_rmse:.6g} R2 {b.linreg_r2:.6g}")
    print(f"report, curves and {len(nets)} checkpoints in {out}")
    return 0


def _cmd_eval(args) -> int:
    net = load_checkpoint(args.checkpoint)
    manifest, frames = load_dataset_dir(args.data)
    scored = [f for f in frames if f.target is not None]
    if not scored:
        raise DatasetError(f"no targets found under {args.data}; "
                           f"nothing to evaluate")
    preds = dict(predict(net, scored, manifest))
    p = [preds[f.sample_id] for f in scored]
    t = [f.target for f in scored]
    result = {"mae": metrics.mae(p, t), "rmse": metrics.rmse(p, t),
              "r2": metrics.r2(p, t), "samples": len(scored)}
    out = Path(args.out)
    config = {"checkpoint": str(args.checkpoint), "data": str(args.data),
              "out": str(out)}
    _report(out, "eval", config, {"metrics": result})
    print(f"MAE {result['mae']:.6g}  RMSE {result['rmse']:.6g}  "
          f"R2 {result['r2']:.6g}  ({len(scored)} samples)")
    return 0


def _cmd_predict(args) -> int:
    net = load_checkpoint(args.checkpoint)
    manifest, frames = load_dataset_dir(args.data)
    preds = predict(net, frames, manifest)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["sample_id,prediction"]
    lines += [f"{sid},{repr(val)}" for sid, val in preds]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    config = {"checkpoint": str(args.checkpoint), "data": str(args.data),
              "out": str(out)}
    _report(out.parent, "predict", config, {"samples": len(preds)})
    print(f"wrote {len(preds)} predictions to {out}")
    return 0


def _cmd_plot(args) -> int:
    source = Path(args.report)
    try:
        doc = json.loads(source.read_text(encoding="utf-8"))
        report = MetricsReport.from_dict(doc)
    except FileNotFoundError:
        raise MetricsError(f"report {source} does not exist") from None
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MetricsError(f"{source} is not a training report: {exc}") from None
    out = Path(args.out)
    paths = render_curves(report, out)
    echo_path = (out / "report.json").resolve()
    if echo_path != source.resolve():
        _report(out, "plot", {"report": str(source), "out": str(out)},
                {"outputs": [p.name for p in paths]})
    print(f"rendered {', '.join(p.name for p in paths)} in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patternreg",
        description="Multi-sensor time series regression via image-like "
                    "grid encoding and a small residual CNN.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--version", action="version",
                        version=f"patternreg {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")

    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", formatter_class=fmt,
                       help="generate a synthetic pattern dataset")
    p.add_argument("--sensors", type=int, default=7,
                   help="number of sensor rows")
    p.add_argument("--time-steps", type=int, default=214,
                   help="time steps per sample")
    p.add_argument("--samples", type=int, default=2000,
                   help="number of samples")
    p.add_argument("--missing-rate", type=float, default=0.0,
                   help="fraction of cells dropped as missing")
    p.add_argument("--noise", type=float, default=0.0,
                   help="measurement noise as a fraction of sensor range")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (default: PBMR_SEED or 0)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("convert", formatter_class=fmt,
                       help="dump filled, normalized tensors for inspection")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--channels", type=int, default=1,
                   help="channels to replicate the grid across")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("train", formatter_class=fmt,
                       help="k-fold cross-validated training")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--arch", default="tiny",
                   choices=["tiny", "small", "resmini"],
                   help="network preset")
    p.add_argument("--optimizer", default="sgd",
                   choices=["sgd", "adam", "lars"], help="optimizer kind")
    p.add_argument("--loss", default="mse", choices=["mse", "l1"],
                   help="training loss")
    p.add_argument("--lr", type=float, default=1e-3, help="learning rate")
    p.add_argument("--batch-size", type=int, default=128, help="batch size")
    p.add_argument("--epochs", type=int, default=1000, help="training epochs")
    p.add_argument("--folds", type=int, default=5,
                   help="cross-validation folds")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (default: PBMR_SEED or 0)")
    p.add_argument("--channels", type=int, default=1,
                   help="input channels fed to the network")
    p.add_argument("--head-hidden", type=int, default=128,
                   help="hidden width of the fully connected head")
    p.add_argument("--momentum", type=float, default=0.9,
                   help="sgd momentum")
    p.add_argument("--beta1", type=float, default=0.9,
                   help="adam first-moment decay")
    p.add_argument("--beta2", type=float, default=0.999,
                   help="adam second-moment decay")
    p.add_argument("--eps", type=float, default=1e-8,
                   help="adam denominator epsilon")
    p.add_argument("--trust-coefficient", type=float, default=1e-3,
                   help="lars trust coefficient")
    p.add_argument("--weight-decay", type=float, default=0.0,
                   help="L2 weight decay")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel fold workers (default: folds capped at "
                        "CPU count)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", formatter_class=fmt,
                       help="score a checkpoint against a labelled dataset")
    p.add_argument("--checkpoint", required=True,
                   help="checkpoint prefix, e.g. runs/a/fold_0")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", formatter_class=fmt,
                       help="write a predictions CSV for a dataset")
    p.add_argument("--checkpoint", required=True,
                   help="checkpoint prefix, e.g. runs/a/fold_0")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("plot", formatter_class=fmt,
                       help="re-render metric curves from a report.json")
    p.add_argument("--report", required=True, help="path to report.json")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
