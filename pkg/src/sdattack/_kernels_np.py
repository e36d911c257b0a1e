"""NumPy implementations of the hot kernels.

Fallback backend used when the compiled extension is unavailable (see
``sdattack.backend``). Function signatures and semantics match
``sdattack._kernels`` exactly. All inputs are C-contiguous float64 arrays;
callers are responsible for validation.
"""

import numpy as np

NAME = "numpy"


def _padded_windows(img, k):
    # (C,H,W) -> (C,H,W,k,k) sliding windows over a zero-padded image
    p = (k - 1) // 2
    padded = np.pad(img, ((0, 0), (p, p), (p, p)))
    return np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(1, 2))


def conv2d_same_single(img, ker):
    """Channelwise 2-D cross-correlation with zero padding, shape-preserving.

    img: (C,H,W), ker: (k,k) with k odd. Returns (C,H,W).
    """
    win = _padded_windows(img, ker.shape[0])
    return np.tensordot(win, ker, axes=([3, 4], [0, 1]))


def conv2d_same_multi(img, weights):
    """Multi-channel 2-D cross-correlation with zero padding.

    img: (Cin,H,W), weights: (Cout,Cin,k,k) with k odd. Returns (Cout,H,W).
    """
    win = _padded_windows(img, weights.shape[-1])
    return np.einsum("chwij,ocij->ohw", win, weights, optimize=True)


def conv2d_same_weight_grad(img, gout, k):
    """Gradient of conv2d_same_multi w.r.t. its weights.

    img: (Cin,H,W), gout: (Cout,H,W). Returns (Cout,Cin,k,k).
    """
    win = _padded_windows(img, k)
    return np.einsum("chwij,ohw->ocij", win, gout, optimize=True)


def resize_bilinear(img, out_h, out_w):
    """Bilinear resize of (C,H,W) to (C,out_h,out_w), half-pixel sampling.

    Source coordinates follow the half-pixel-centers convention:
    src = (dst + 0.5) * in/out - 0.5, clamped to the valid range.
    """
    c, h, w = img.shape
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0.0, float(h - 1))
    xs = np.clip(xs, 0.0, float(w - 1))
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]

    tl = img[:, y0[:, None], x0[None, :]]
    tr = img[:, y0[:, None], x1[None, :]]
    bl = img[:, y1[:, None], x0[None, :]]
    br = img[:, y1[:, None], x1[None, :]]

    top = tl * (1.0 - wx) + tr * wx
    bot = bl * (1.0 - wx) + br * wx
    return top * (1.0 - wy) + bot * wy
