"""Dense-tensor primitives shared by every other module.

Tensors are plain float64 ``numpy.ndarray`` values in row-major order; images
and gradients use the (C, H, W) layout. All operations here are pure
functions: inputs are never mutated and results are freshly allocated, so
values can be shared read-only across workers.
"""

from __future__ import annotations

import numpy as np

from . import backend


def as_tensor(values) -> np.ndarray:
    """Coerce to a C-contiguous float64 array."""
    return np.ascontiguousarray(values, dtype=np.float64)


def elementwise_sign(t: np.ndarray) -> np.ndarray:
    """Elementwise sign with sign(0) = 0."""
    return np.sign(t)


def clip_to_ball(
    x_candidate: np.ndarray,
    x_origin: np.ndarray,
    epsilon: float,
    value_lo: float,
    value_hi: float,
) -> np.ndarray:
    """Project onto the L-inf ball around ``x_origin`` intersected with the value range.

    Returns the elementwise nearest point to ``x_candidate`` satisfying both
    ``|out - x_origin| <= epsilon`` and ``value_lo <= out <= value_hi``.
    """
    if x_candidate.shape != x_origin.shape:
        raise ValueError(
            f"shape mismatch: candidate {x_candidate.shape} vs origin {x_origin.shape}"
        )
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if value_lo > value_hi:
        raise ValueError(f"value_lo {value_lo} exceeds value_hi {value_hi}")
    lo = np.maximum(x_origin - epsilon, value_lo)
    hi = np.minimum(x_origin + epsilon, value_hi)
    return np.clip(x_candidate, lo, hi)


def conv2d_same(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Channelwise 2-D cross-correlation with zero padding; output shape equals input shape.

    ``image`` is (C, H, W) and ``kernel`` is (k, k) with k odd.
    """
    if image.ndim != 3:
        raise ValueError(f"image must be (C,H,W), got shape {image.shape}")
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError(f"kernel must be square, got shape {kernel.shape}")
    if kernel.shape[0] % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {kernel.shape[0]}")
    return backend.conv2d_same_single(as_tensor(image), as_tensor(kernel))


def resize_bilinear(image: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize of a (C, H, W) image using half-pixel centers.

    Output values are convex combinations of input values, so they stay within
    [min(image), max(image)]. Resizing to the original size is the identity.
    """
    if image.ndim != 3:
        raise ValueError(f"image must be (C,H,W), got shape {image.shape}")
    if new_h < 1 or new_w < 1:
        raise ValueError(f"target size must be positive, got {new_h}x{new_w}")
    return backend.resize_bilinear(as_tensor(image), int(new_h), int(new_w))


def pad_to(
    image: np.ndarray,
    out_h: int,
    out_w: int,
    top: int,
    left: int,
    fill: float = 0.0,
) -> np.ndarray:
    """Place a (C, h, w) image into a (C, out_h, out_w) canvas filled with ``fill``."""
    if image.ndim != 3:
        raise ValueError(f"image must be (C,H,W), got shape {image.shape}")
    c, h, w = image.shape
    if top < 0 or left < 0 or top + h > out_h or left + w > out_w:
        raise ValueError(
            f"offset ({top},{left}) overflows {out_h}x{out_w} canvas for {h}x{w} image"
        )
    out = np.full((c, out_h, out_w), float(fill), dtype=np.float64)
    out[:, top : top + h, left : left + w] = image
    return out
