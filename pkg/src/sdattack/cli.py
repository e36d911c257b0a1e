"""Command-line harness.

Subcommands: gen-data, train, attack, eval, grid, report. Every source of
randomness is pinned by an explicit --seed flag; reruns with identical
arguments produce identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import archive
from .attacks import run_attack
from .dataset import (
    DatasetSpec,
    correctly_classified_subset,
    generate,
    load_dataset,
    save_dataset,
)
from .harness import (
    emit_report,
    load_config,
    load_report,
    parse_attack,
    run_grid,
    sample_attack_seed,
    success_rate,
)
from .models import MODEL_KINDS, LabeledSample, accuracy, load_model, save_model, train

ADV_FORMAT_VERSION = 1


def _parse_shape(text):
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"shape must look like 1x16x16, got {text!r}")
    return tuple(int(p) for p in parts)


def _cmd_gen_data(args):
    spec = DatasetSpec(
        num_classes=args.classes,
        image_shape=args.shape,
        samples_per_class=args.per_class,
        noise_std=args.noise_std,
        jitter=args.jitter,
        seed=args.seed,
    )
    train_split, eval_split = generate(spec)
    save_dataset(spec, train_split, eval_split, args.out)
    print(
        f"wrote {args.out}: {len(train_split)} train + {len(eval_split)} eval samples, "
        f"{spec.num_classes} classes, shape {'x'.join(map(str, spec.image_shape))}"
    )
    return 0


def _cmd_train(args):
    _, train_split, eval_split = load_dataset(args.data)
    entry = train(args.kind, train_split, args.seed, args.epochs, args.lr, args.batch_size)
    save_model(entry, args.out)
    eval_acc = accuracy(entry.model, eval_split)
    print(
        f"wrote {args.out}: kind={entry.kind} seed={entry.seed} "
        f"train_acc={entry.train_accuracy:.4f} eval_acc={eval_acc:.4f}"
    )
    return 0


def _attack_config_from_args(args):
    d = {
        "family": args.family,
        "epsilon": args.epsilon,
        "iterations": args.iterations,
        "schedule_family": args.schedule_family,
        "schedule_direction": args.schedule_direction,
        "log_base": args.log_base,
        "sd_enabled": args.sd,
        "decay": args.decay,
        "l1_normalize_grad": args.l1_normalize,
        "random_start": args.random_start,
    }
    if args.transform != "none":
        d["transform"] = {
            "kind": args.transform,
            "dim_probability": args.dim_probability,
            "dim_resize_low": args.dim_resize_low,
            "tim_kernel_size": args.tim_kernel_size,
            "sim_copies": args.sim_copies,
        }
        if args.tim_sigma is not None:
            d["transform"]["tim_sigma"] = args.tim_sigma
    return parse_attack(d)[1]


def _cmd_attack(args):
    _, train_split, eval_split = load_dataset(args.data)
    samples = eval_split if args.split == "eval" else train_split
    zoo = [load_model(p) for p in args.model]
    models = [e.model for e in zoo]
    if args.correct_only:
        samples = correctly_classified_subset(models, samples)
    cfg = _attack_config_from_args(args)
    cfg.validate()

    benign = np.stack([s.image for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    adv = np.empty_like(benign)
    max_shift = 0.0
    for j, sample in enumerate(samples):
        run_cfg = replace(cfg, rng_seed=sample_attack_seed(args.seed, 0, 0, j))
        x_out, _ = run_attack(run_cfg, sample, models)
        adv[j] = x_out
        max_shift = max(max_shift, float(np.max(np.abs(x_out - sample.image))))

    pairs = [(adv[j], int(labels[j])) for j in range(len(samples))]
    source_rate = success_rate(models[0], pairs) if len(models) == 1 else None
    meta = {
        "format_version": ADV_FORMAT_VERSION,
        "seed": args.seed,
        "family": cfg.family,
        "epsilon": cfg.schedule.epsilon,
        "iterations": cfg.schedule.steps,
        "schedule_family": cfg.schedule.family,
        "schedule_direction": cfg.schedule.direction,
        "sd_enabled": cfg.sd_enabled,
        "decay": cfg.decay,
        "transform": None if cfg.transform is None else cfg.transform.kind,
        "models": [str(p) for p in args.model],
    }
    archive.save_archive(args.out, {"meta": meta, "images": adv, "labels": labels, "benign": benign})

    summary = {
        "samples": len(samples),
        "max_linf_shift": max_shift,
        "epsilon": cfg.schedule.epsilon,
        "source_success_rate": source_rate,
    }
    trace_path = args.trace_out or str(args.out) + ".summary.json"
    Path(trace_path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    rate = "n/a" if source_rate is None else f"{source_rate:.4f}"
    print(
        f"wrote {args.out}: {len(samples)} adversarial examples, "
        f"max linf shift {max_shift:.6f}, source success rate {rate}"
    )
    return 0


def _cmd_eval(args):
    entries = archive.load_archive(args.adv)
    images = entries["images"]
    labels = entries["labels"]
    pairs = [(images[j], int(labels[j])) for j in range(len(labels))]
    rows = []
    for path in args.model:
        entry = load_model(path)
        rate = success_rate(entry.model, pairs)
        rows.append((str(path), entry.kind, rate, len(pairs)))
        print(f"{path}: success_rate={rate:.4f} n={len(pairs)}")
    if args.out:
        import csv

        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("model", "kind", "success_rate", "sample_count"))
            for path, kind, rate, n in rows:
                writer.writerow((path, kind, repr(rate), n))
    return 0


def _cmd_grid(args):
    config = load_config(args.config)
    report = run_grid(config, workers=args.workers)
    written = emit_report(report, args.out)
    for path in written:
        print(f"wrote {path}")
    print(f"grid done: {len(report.rows)} cells in {report.wall_time_s:.1f}s")
    return 0


def _cmd_report(args):
    report = load_report(args.run)
    out_dir = args.out or args.run
    written = emit_report(report, out_dir, formats=(args.format,))
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sdattack",
        description="Desk-scale transferability harness for sign-gradient attacks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate and write a synthetic dataset")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--shape", type=_parse_shape, default=(1, 16, 16), metavar="CxHxW")
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--noise-std", type=float, default=0.08)
    p.add_argument("--jitter", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a victim model on a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=MODEL_KINDS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("attack", help="run one attack over a dataset split")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "eval"), default="eval")
    p.add_argument("--model", action="append", required=True, help="repeat for an ensemble")
    p.add_argument("--correct-only", action="store_true", help="restrict to samples all models classify correctly")
    p.add_argument("--family", choices=("fgsm", "ifgsm", "mifgsm", "nifgsm"), default="ifgsm")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--schedule-family", choices=("constant", "log", "linear", "power", "exp"), default="constant")
    p.add_argument("--schedule-direction", choices=("increasing", "decreasing"), default="increasing")
    p.add_argument("--log-base", type=float, default=None)
    p.add_argument("--sd", action="store_true", help="enable the dual-example strategy")
    p.add_argument("--decay", type=float, default=None)
    p.add_argument("--l1-normalize", action="store_true")
    p.add_argument("--random-start", action="store_true")
    p.add_argument("--transform", choices=("none", "dim", "tim", "sim"), default="none")
    p.add_argument("--dim-probability", type=float, default=0.5)
    p.add_argument("--dim-resize-low", type=float, default=0.9)
    p.add_argument("--tim-kernel-size", type=int, default=7)
    p.add_argument("--tim-sigma", type=float, default=None)
    p.add_argument("--sim-copies", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--trace-out", default=None, help="summary JSON path (default <out>.summary.json)")
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("eval", help="score saved adversarial examples against models")
    p.add_argument("--adv", required=True)
    p.add_argument("--model", action="append", required=True)
    p.add_argument("--out", default=None, help="optional CSV output")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("grid", help="full experiment grid from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("report", help="re-emit report files from a saved run")
    p.add_argument("--run", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"sdattack: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
