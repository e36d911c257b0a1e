"""Input-transformation attack integrations: DIM, TIM and SIM.

Each transform hooks the attack loop at a different, independent point:
DIM replaces the probe input before the gradient call, TIM smooths the
update direction before the sign step, and SIM replaces the gradient
computation with an average over downscaled copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import ensemble_input_gradient
from .numerics import conv2d_same, pad_to, resize_bilinear

TRANSFORM_KINDS = ("dim", "tim", "sim")


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    dim_probability: float = 0.5
    dim_resize_low: float = 0.9
    tim_kernel_size: int = 7
    tim_sigma: float | None = None  # default kernel_size / 6
    sim_copies: int = 5
    rng_seed: int = 0

    def validate(self) -> None:
        if self.kind not in TRANSFORM_KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if not 0.0 <= self.dim_probability <= 1.0:
            raise ValueError(f"dim_probability must be in [0,1], got {self.dim_probability}")
        if not 0.0 < self.dim_resize_low <= 1.0:
            raise ValueError(f"dim_resize_low must be in (0,1], got {self.dim_resize_low}")
        if self.tim_kernel_size % 2 == 0 or self.tim_kernel_size < 1:
            raise ValueError(f"tim_kernel_size must be odd, got {self.tim_kernel_size}")
        if self.tim_sigma is not None and self.tim_sigma <= 0:
            raise ValueError(f"tim_sigma must be positive, got {self.tim_sigma}")
        if self.sim_copies < 1:
            raise ValueError(f"sim_copies must be at least 1, got {self.sim_copies}")

    def sigma(self) -> float:
        return self.tim_sigma if self.tim_sigma is not None else self.tim_kernel_size / 6.0


def _spec_rng(spec: TransformSpec):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.rng_seed)))


def dim_transform(image: np.ndarray, spec: TransformSpec, rng=None) -> np.ndarray:
    """Random resize-and-pad; returns the image unchanged with probability 1 - p.

    Draw order (fixed for reproducibility): the probability gate, then the
    scale factor uniform in [dim_resize_low, 1), then the top and left pad
    offsets. Output shape always equals the input shape; padding fill is 0.
    """
    spec.validate()
    if rng is None:
        rng = _spec_rng(spec)
    if rng.random() >= spec.dim_probability:
        return image
    _, h, w = image.shape
    scale = rng.uniform(spec.dim_resize_low, 1.0)
    new_h = max(1, math.ceil(scale * h))
    new_w = max(1, math.ceil(scale * w))
    resized = resize_bilinear(image, new_h, new_w)
    top = int(rng.integers(0, h - new_h + 1))
    left = int(rng.integers(0, w - new_w + 1))
    return pad_to(resized, h, w, top, left, fill=0.0)


def tim_kernel(k: int, sigma: float) -> np.ndarray:
    """Discrete 2-D Gaussian, normalized to sum to 1."""
    if k % 2 == 0 or k < 1:
        raise ValueError(f"kernel size must be odd, got {k}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = (k - 1) // 2
    offsets = np.arange(-r, r + 1, dtype=np.float64)
    sq = offsets[:, None] ** 2 + offsets[None, :] ** 2
    kernel = np.exp(-sq / (2.0 * sigma**2))
    return kernel / kernel.sum()


def tim_smooth_gradient(g: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Gaussian-smooth an update direction before the sign step."""
    return conv2d_same(g, kernel)


def sim_gradient(models, image: np.ndarray, label: int, m: int) -> np.ndarray:
    """Scale-copy gradient: mean over i of grad_x loss(f(x / 2^i), y).

    Each term is the loss gradient at the downscaled input x / 2^i mapped
    back through the chain rule, i.e. multiplied by 1 / 2^i.
    """
    if m < 1:
        raise ValueError(f"number of scale copies must be at least 1, got {m}")
    if not isinstance(models, (list, tuple)):
        models = [models]
    total = np.zeros_like(image, dtype=np.float64)
    for i in range(m):
        factor = 0.5**i
        total += factor * ensemble_input_gradient(models, image * factor, label)
    return total / m
