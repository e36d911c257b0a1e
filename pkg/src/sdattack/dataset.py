"""Deterministic synthetic image dataset.

Each class is a geometric template (horizontal bar, vertical bar, cross,
centered disk) rendered into [0, 1], jittered by a small random translation
and perturbed by clipped Gaussian noise. Generation is a pure function of the
seed: all randomness comes from PCG64 initialized via SeedSequence((seed, 0))
for the train split and ((seed, 1)) for the eval split, so files reproduce
byte-identically across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import archive
from .models import LabeledSample, predict

DATASET_FORMAT_VERSION = 1

TEMPLATE_NAMES = ("horizontal_bar", "vertical_bar", "cross", "disk")


@dataclass(frozen=True)
class DatasetSpec:
    num_classes: int = 4
    image_shape: tuple[int, int, int] = (1, 16, 16)
    samples_per_class: int = 50
    noise_std: float = 0.08
    jitter: int = 2  # max absolute translation in pixels; 0 disables
    seed: int = 0

    def validate(self) -> None:
        if not 2 <= self.num_classes <= len(TEMPLATE_NAMES):
            raise ValueError(
                f"num_classes must be in [2, {len(TEMPLATE_NAMES)}], got {self.num_classes}"
            )
        if len(self.image_shape) != 3 or any(d < 8 for d in self.image_shape[1:]):
            raise ValueError(f"image_shape must be (C,H,W) with H,W >= 8, got {self.image_shape}")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")


def render_template(class_index: int, shape, dy: int = 0, dx: int = 0) -> np.ndarray:
    """Draw the class template at a pixel offset; parts shifted off-canvas are clipped."""
    c, h, w = shape
    ys = np.arange(h, dtype=np.float64)[:, None] - dy
    xs = np.arange(w, dtype=np.float64)[None, :] - dx
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    bar_half = max(1.0, 0.09 * min(h, w))
    margin = 2.0

    h_bar = (np.abs(ys - cy) <= bar_half) & (xs >= margin) & (xs <= w - 1 - margin)
    v_bar = (np.abs(xs - cx) <= bar_half) & (ys >= margin) & (ys <= h - 1 - margin)
    if class_index == 0:
        mask = h_bar
    elif class_index == 1:
        mask = v_bar
    elif class_index == 2:
        mask = h_bar | v_bar
    elif class_index == 3:
        radius = 0.28 * min(h, w)
        mask = (ys - cy) ** 2 + (xs - cx) ** 2 <= radius**2
    else:
        raise ValueError(f"no template for class {class_index}")
    canvas = np.zeros((h, w), dtype=np.float64)
    canvas[mask] = 1.0
    return np.broadcast_to(canvas, (c, h, w)).copy()


def _split_rng(seed: int, split_index: int):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, split_index))))


def _generate_split(spec: DatasetSpec, rng) -> list[LabeledSample]:
    samples = []
    for label in range(spec.num_classes):
        for _ in range(spec.samples_per_class):
            dy = dx = 0
            if spec.jitter > 0:
                dy = int(rng.integers(-spec.jitter, spec.jitter + 1))
                dx = int(rng.integers(-spec.jitter, spec.jitter + 1))
            image = render_template(label, spec.image_shape, dy, dx)
            if spec.noise_std > 0:
                image = image + spec.noise_std * rng.standard_normal(spec.image_shape)
                image = np.clip(image, 0.0, 1.0)
            samples.append(LabeledSample(image=image, label=label))
    return samples


def generate(spec: DatasetSpec):
    """Generate disjoint (train, eval) splits, each class-balanced."""
    spec.validate()
    train = _generate_split(spec, _split_rng(spec.seed, 0))
    eval_ = _generate_split(spec, _split_rng(spec.seed, 1))
    return train, eval_


def correctly_classified_subset(models, samples) -> list[LabeledSample]:
    """Samples every listed model predicts correctly.

    Attack evaluation is restricted to this subset so that success rates
    measure induced misclassification, not pre-existing errors.
    """
    if not isinstance(models, (list, tuple)):
        models = [models]
    subset = [
        s for s in samples if all(predict(m, s.image) == s.label for m in models)
    ]
    if not subset:
        raise ValueError(
            "no sample is classified correctly by every model; "
            "the dataset is too hard for this zoo"
        )
    return subset


def _stack(samples):
    images = np.stack([s.image for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return images, labels


def _unstack(images, labels):
    return [LabeledSample(image=img, label=int(lab)) for img, lab in zip(images, labels)]


def save_dataset(spec: DatasetSpec, train, eval_, path) -> None:
    """Write a dataset file; see docs/file_formats.md."""
    train_images, train_labels = _stack(train)
    eval_images, eval_labels = _stack(eval_)
    archive.save_archive(
        path,
        {
            "meta": {
                "format_version": DATASET_FORMAT_VERSION,
                "num_classes": spec.num_classes,
                "image_shape": list(spec.image_shape),
                "samples_per_class": spec.samples_per_class,
                "noise_std": spec.noise_std,
                "jitter": spec.jitter,
                "seed": spec.seed,
            },
            "train/images": train_images,
            "train/labels": train_labels,
            "eval/images": eval_images,
            "eval/labels": eval_labels,
        },
    )


def load_dataset(path):
    """Read a dataset file; returns (spec, train, eval)."""
    entries = archive.load_archive(path)
    meta = entries["meta"]
    if meta["format_version"] != DATASET_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported dataset format {meta['format_version']}")
    spec = DatasetSpec(
        num_classes=meta["num_classes"],
        image_shape=tuple(meta["image_shape"]),
        samples_per_class=meta["samples_per_class"],
        noise_std=meta["noise_std"],
        jitter=meta["jitter"],
        seed=meta["seed"],
    )
    train = _unstack(entries["train/images"], entries["train/labels"])
    eval_ = _unstack(entries["eval/images"], entries["eval/labels"])
    return spec, train, eval_
