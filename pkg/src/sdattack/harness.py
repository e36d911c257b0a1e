"""Experiment orchestration: victim zoos, attack grids, transfer matrices.

A grid run generates the dataset, trains (or loads) the victim models,
restricts evaluation to the samples every victim classifies correctly, crafts
adversarial examples for each (attack, source) cell and scores every target.
Cells fan out over a process pool; each sample's attack seed derives from the
master seed by a fixed splitting rule, so the report is a pure function of
the config regardless of worker count or scheduling order.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, run_attack
from .dataset import DatasetSpec, correctly_classified_subset, generate
from .models import ModelZooEntry, forward, load_model, train
from .schedules import ScheduleSpec, normalized_schedule
from .transforms import TransformSpec

PROTOCOLS = ("single_source", "ensemble_holdout")

REPORT_CSV_HEADER = ("attack", "source", "target", "success_rate", "sample_count")
WHITEBOX_CSV_HEADER = ("attack", "model", "success_rate", "sample_count")
SUMMARY_CSV_HEADER = ("attack", "transfer_mean", "white_box_mean")


@dataclass(frozen=True)
class VictimSpec:
    """A victim model: either trained in-run (kind + seed) or loaded from a path."""

    name: str
    kind: str | None = None
    seed: int | None = None
    path: str | None = None


@dataclass(frozen=True)
class TrainParams:
    epochs: int = 30
    lr: float = 0.5
    batch_size: int = 16


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    dataset: DatasetSpec
    victims: tuple
    attacks: tuple  # of (name, AttackConfig)
    protocol: str = "single_source"
    train_params: TrainParams = TrainParams()

    def validate(self) -> None:
        self.dataset.validate()
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if len(self.victims) < 2:
            raise ValueError("transfer measurement needs at least 2 victims")
        names = [v.name for v in self.victims]
        if len(set(names)) != len(names):
            raise ValueError(f"victim names must be unique, got {names}")
        attack_names = [name for name, _ in self.attacks]
        if len(set(attack_names)) != len(attack_names):
            raise ValueError(f"attack names must be unique, got {attack_names}")
        for _, cfg in self.attacks:
            cfg.validate()


@dataclass(frozen=True)
class ReportRow:
    attack: str
    source: str
    target: str
    role: str  # transfer | white_box | holdout
    success_rate: float
    sample_count: int


@dataclass
class TransferReport:
    rows: list
    metadata: dict  # deterministic report body
    wall_time_s: float  # excluded from determinism checks


def success_rate(model, adversarial) -> float:
    """Fraction of (image, label) pairs the model misclassifies."""
    if len(adversarial) == 0:
        raise ValueError("cannot compute a success rate over zero samples")
    missed = sum(
        1 for image, label in adversarial if int(np.argmax(forward(model, image))) != label
    )
    return missed / len(adversarial)


def sample_attack_seed(master_seed, attack_index, source_index, sample_index) -> int:
    """Documented seed-splitting rule for per-sample attack randomness."""
    seq = np.random.SeedSequence((master_seed, attack_index, source_index, sample_index))
    return int(seq.generate_state(1, np.uint64)[0])


def _config_to_dict(config: ExperimentConfig) -> dict:
    """Canonical snapshot of the resolved config, including schedule values."""
    attacks = []
    for name, cfg in config.attacks:
        entry = {
            "name": name,
            "family": cfg.family,
            "sd_enabled": cfg.sd_enabled,
            "decay": cfg.decay,
            "l1_normalize_grad": cfg.l1_normalize_grad,
            "random_start": cfg.random_start,
            "schedule": {
                "family": cfg.schedule.family,
                "direction": cfg.schedule.direction,
                "steps": cfg.schedule.steps,
                "epsilon": cfg.schedule.epsilon,
                "log_base": cfg.schedule.log_base,
            },
            "step_sizes": [float(a) for a in normalized_schedule(cfg.schedule)],
            "transform": None
            if cfg.transform is None
            else {
                "kind": cfg.transform.kind,
                "dim_probability": cfg.transform.dim_probability,
                "dim_resize_low": cfg.transform.dim_resize_low,
                "tim_kernel_size": cfg.transform.tim_kernel_size,
                "tim_sigma": cfg.transform.sigma(),
                "sim_copies": cfg.transform.sim_copies,
            },
        }
        attacks.append(entry)
    return {
        "seed": config.seed,
        "protocol": config.protocol,
        "dataset": {
            "num_classes": config.dataset.num_classes,
            "image_shape": list(config.dataset.image_shape),
            "samples_per_class": config.dataset.samples_per_class,
            "noise_std": config.dataset.noise_std,
            "jitter": config.dataset.jitter,
            "seed": config.dataset.seed,
        },
        "victims": [
            {"name": v.name, "kind": v.kind, "seed": v.seed, "path": v.path}
            for v in config.victims
        ],
        "train": {
            "epochs": config.train_params.epochs,
            "lr": config.train_params.lr,
            "batch_size": config.train_params.batch_size,
        },
        "attacks": attacks,
    }


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(_config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def resolve_victims(config: ExperimentConfig, train_split) -> list:
    """Train in-run victims and load path-referenced ones, in config order."""
    entries = []
    for v in config.victims:
        if v.path is not None:
            path = Path(v.path)
            if not path.exists():
                raise FileNotFoundError(f"victim model file not found: {path}")
            entries.append(load_model(path))
        else:
            tp = config.train_params
            entries.append(
                train(v.kind, train_split, v.seed, tp.epochs, tp.lr, tp.batch_size)
            )
    return entries


def _craft_cell(args):
    """Worker task: craft adversarial examples for one (attack, source) cell
    and score every victim on them. Returns (attack_idx, source_idx, rates)."""
    (
        master_seed,
        protocol,
        attack_idx,
        attack_cfg,
        source_idx,
        victims,
        images,
        labels,
    ) = args
    if protocol == "single_source":
        sources = [victims[source_idx]]
    else:
        sources = [m for i, m in enumerate(victims) if i != source_idx]
    from .models import LabeledSample  # local import keeps the task self-contained

    adv = []
    for j in range(len(images)):
        cfg = replace(
            attack_cfg,
            rng_seed=sample_attack_seed(master_seed, attack_idx, source_idx, j),
        )
        sample = LabeledSample(image=images[j], label=int(labels[j]))
        x_out, _ = run_attack(cfg, sample, sources)
        adv.append((x_out, int(labels[j])))
    if protocol == "single_source":
        rates = [success_rate(m, adv) for m in victims]
    else:
        rates = [success_rate(victims[source_idx], adv)]
    return attack_idx, source_idx, rates


def run_grid(config: ExperimentConfig, workers: int = 1) -> TransferReport:
    """Run every (attack, source-or-holdout) cell and assemble the report.

    Results are independent of ``workers``: each cell is a pure function of
    the config and cells are reduced in a fixed order.
    """
    config.validate()
    started = time.perf_counter()
    train_split, eval_split = generate(config.dataset)
    zoo = resolve_victims(config, train_split)
    models = [entry.model for entry in zoo]
    subset = correctly_classified_subset(models, eval_split)
    images = np.stack([s.image for s in subset])
    labels = np.array([s.label for s in subset], dtype=np.int64)

    tasks = []
    for attack_idx, (_, attack_cfg) in enumerate(config.attacks):
        for source_idx in range(len(config.victims)):
            tasks.append(
                (
                    config.seed,
                    config.protocol,
                    attack_idx,
                    attack_cfg,
                    source_idx,
                    models,
                    images,
                    labels,
                )
            )

    if workers <= 1:
        raw = [_craft_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_craft_cell, tasks))
    raw.sort(key=lambda r: (r[0], r[1]))

    victim_names = [v.name for v in config.victims]
    rows = []
    for attack_idx, source_idx, rates in raw:
        attack_name = config.attacks[attack_idx][0]
        if config.protocol == "single_source":
            source_name = victim_names[source_idx]
            for target_idx, rate in enumerate(rates):
                role = "white_box" if target_idx == source_idx else "transfer"
                rows.append(
                    ReportRow(
                        attack=attack_name,
                        source=source_name,
                        target=victim_names[target_idx],
                        role=role,
                        success_rate=rate,
                        sample_count=len(subset),
                    )
                )
        else:
            holdout = victim_names[source_idx]
            rows.append(
                ReportRow(
                    attack=attack_name,
                    source=f"ensemble_wo_{holdout}",
                    target=holdout,
                    role="holdout",
                    success_rate=rates[0],
                    sample_count=len(subset),
                )
            )

    metadata = {
        "config": _config_to_dict(config),
        "config_hash": config_hash(config),
        "subset_size": len(subset),
        "eval_size": len(eval_split),
        "victims": [
            {
                "name": name,
                "kind": entry.kind,
                "seed": entry.seed,
                "train_accuracy": entry.train_accuracy,
            }
            for name, entry in zip(victim_names, zoo)
        ],
    }
    return TransferReport(
        rows=rows, metadata=metadata, wall_time_s=time.perf_counter() - started
    )


def _csv_bytes(header, data_rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(data_rows)
    return buf.getvalue().encode("utf-8")


def summarize(report: TransferReport) -> list:
    """Per-attack mean transfer and white-box success rates, in config order."""
    order = []
    for row in report.rows:
        if row.attack not in order:
            order.append(row.attack)
    summary = []
    for attack in order:
        transfer = [
            r.success_rate for r in report.rows if r.attack == attack and r.role != "white_box"
        ]
        white = [
            r.success_rate for r in report.rows if r.attack == attack and r.role == "white_box"
        ]
        summary.append(
            (
                attack,
                sum(transfer) / len(transfer) if transfer else None,
                sum(white) / len(white) if white else None,
            )
        )
    return summary


def emit_report(report: TransferReport, out_dir, formats=("csv", "json")) -> list:
    """Write the report files; returns the written paths.

    ``report.csv`` holds one row per transfer/holdout cell, ``whitebox.csv``
    the white-box cells, ``summary.csv`` per-attack means. ``report.json``
    carries the full deterministic body (config snapshot with the schedule
    step sizes actually used, plus all rows); wall time and other
    environment metadata live in ``run_meta.json`` only.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        transfer_rows = [
            (r.attack, r.source, r.target, repr(r.success_rate), r.sample_count)
            for r in report.rows
            if r.role != "white_box"
        ]
        white_rows = [
            (r.attack, r.target, repr(r.success_rate), r.sample_count)
            for r in report.rows
            if r.role == "white_box"
        ]
        summary_rows = [
            (
                attack,
                "" if transfer is None else repr(transfer),
                "" if white is None else repr(white),
            )
            for attack, transfer, white in summarize(report)
        ]
        for name, header, data in (
            ("report.csv", REPORT_CSV_HEADER, transfer_rows),
            ("whitebox.csv", WHITEBOX_CSV_HEADER, white_rows),
            ("summary.csv", SUMMARY_CSV_HEADER, summary_rows),
        ):
            path = out / name
            path.write_bytes(_csv_bytes(header, data))
            written.append(path)
    if "json" in formats:
        body = {
            "metadata": report.metadata,
            "rows": [
                {
                    "attack": r.attack,
                    "source": r.source,
                    "target": r.target,
                    "role": r.role,
                    "success_rate": r.success_rate,
                    "sample_count": r.sample_count,
                }
                for r in report.rows
            ],
        }
        path = out / "report.json"
        path.write_bytes(json.dumps(body, sort_keys=True, indent=2).encode("utf-8") + b"\n")
        written.append(path)
    meta_path = out / "run_meta.json"
    meta_path.write_text(json.dumps({"wall_time_s": report.wall_time_s}, indent=2) + "\n")
    return written


def load_report(run_dir) -> TransferReport:
    """Rebuild a report from a saved run directory's report.json."""
    body = json.loads((Path(run_dir) / "report.json").read_text())
    rows = [
        ReportRow(
            attack=r["attack"],
            source=r["source"],
            target=r["target"],
            role=r["role"],
            success_rate=r["success_rate"],
            sample_count=r["sample_count"],
        )
        for r in body["rows"]
    ]
    return TransferReport(rows=rows, metadata=body["metadata"], wall_time_s=0.0)


def parse_schedule(d: dict, epsilon: float, steps: int) -> ScheduleSpec:
    kwargs = {
        "family": d.get("schedule_family", "constant"),
        "direction": d.get("schedule_direction", "increasing"),
        "steps": steps,
        "epsilon": epsilon,
    }
    if d.get("log_base") is not None:
        kwargs["log_base"] = float(d["log_base"])
    return ScheduleSpec(**kwargs)


def parse_transform(d) -> TransformSpec | None:
    if d is None:
        return None
    kwargs = {"kind": d["kind"]}
    for key in (
        "dim_probability",
        "dim_resize_low",
        "tim_kernel_size",
        "tim_sigma",
        "sim_copies",
        "rng_seed",
    ):
        if key in d:
            kwargs[key] = d[key]
    return TransformSpec(**kwargs)


def parse_attack(d: dict) -> tuple:
    """Parse one attack entry of a grid config into (name, AttackConfig).

    ``decay`` defaults to 1.0 for plain momentum attacks and to 0.9 when the
    dual-example strategy is enabled on a momentum attack.
    """
    family = d["family"]
    steps = int(d.get("iterations", 1 if family == "fgsm" else 10))
    schedule = parse_schedule(d, float(d["epsilon"]), steps)
    sd_enabled = bool(d.get("sd_enabled", False))
    if "decay" in d and d["decay"] is not None:
        decay = float(d["decay"])
    else:
        decay = 0.9 if (sd_enabled and family in ("mifgsm", "nifgsm")) else 1.0
    cfg = AttackConfig(
        family=family,
        schedule=schedule,
        sd_enabled=sd_enabled,
        decay=decay,
        transform=parse_transform(d.get("transform")),
        rng_seed=int(d.get("rng_seed", 0)),
        l1_normalize_grad=bool(d.get("l1_normalize_grad", False)),
        random_start=bool(d.get("random_start", False)),
    )
    name = d.get("name", family)
    return name, cfg


def config_from_dict(d: dict) -> ExperimentConfig:
    """Parse a grid config mapping (see docs/config_format.md)."""
    try:
        ds = d.get("dataset", {})
        dataset = DatasetSpec(
            num_classes=int(ds.get("num_classes", 4)),
            image_shape=tuple(ds.get("image_shape", (1, 16, 16))),
            samples_per_class=int(ds.get("samples_per_class", 50)),
            noise_std=float(ds.get("noise_std", 0.08)),
            jitter=int(ds.get("jitter", 2)),
            seed=int(ds.get("seed", 0)),
        )
        victims = tuple(
            VictimSpec(
                name=v["name"],
                kind=v.get("kind"),
                seed=v.get("seed"),
                path=v.get("path"),
            )
            for v in d["victims"]
        )
        tr = d.get("train", {})
        train_params = TrainParams(
            epochs=int(tr.get("epochs", 30)),
            lr=float(tr.get("lr", 0.5)),
            batch_size=int(tr.get("batch_size", 16)),
        )
        attacks = tuple(parse_attack(a) for a in d["attacks"])
        config = ExperimentConfig(
            seed=int(d.get("seed", 0)),
            dataset=dataset,
            victims=victims,
            attacks=attacks,
            protocol=d.get("protocol", "single_source"),
            train_params=train_params,
        )
    except KeyError as exc:
        raise ValueError(f"grid config is missing required key {exc}") from exc
    config.validate()
    return config


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))
