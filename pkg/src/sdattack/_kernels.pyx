# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels.

Twin of ``sdattack._kernels_np``; see that module for the contracts. The
arithmetic mirrors the NumPy backend so results agree to rounding error.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"


def conv2d_same_single(double[:, :, ::1] img, double[:, ::1] ker):
    cdef Py_ssize_t c = img.shape[0], h = img.shape[1], w = img.shape[2]
    cdef Py_ssize_t k = ker.shape[0], p = (k - 1) // 2
    out_arr = np.zeros((c, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t ch, y, x, i, j, yy, xx
    cdef double acc
    with nogil:
        for ch in range(c):
            for y in range(h):
                for x in range(w):
                    acc = 0.0
                    for i in range(k):
                        yy = y + i - p
                        if yy < 0 or yy >= h:
                            continue
                        for j in range(k):
                            xx = x + j - p
                            if xx < 0 or xx >= w:
                                continue
                            acc += img[ch, yy, xx] * ker[i, j]
                    out[ch, y, x] = acc
    return out_arr


def conv2d_same_multi(double[:, :, ::1] img, double[:, :, :, ::1] weights):
    cdef Py_ssize_t cin = img.shape[0], h = img.shape[1], w = img.shape[2]
    cdef Py_ssize_t cout = weights.shape[0], k = weights.shape[3], p = (k - 1) // 2
    out_arr = np.zeros((cout, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t o, ci, y, x, i, j, yy, xx
    cdef double acc
    with nogil:
        for o in range(cout):
            for y in range(h):
                for x in range(w):
                    acc = 0.0
                    for ci in range(cin):
                        for i in range(k):
                            yy = y + i - p
                            if yy < 0 or yy >= h:
                                continue
                            for j in range(k):
                                xx = x + j - p
                                if xx < 0 or xx >= w:
                                    continue
                                acc += img[ci, yy, xx] * weights[o, ci, i, j]
                    out[o, y, x] = acc
    return out_arr


def conv2d_same_weight_grad(double[:, :, ::1] img, double[:, :, ::1] gout, Py_ssize_t k):
    cdef Py_ssize_t cin = img.shape[0], h = img.shape[1], w = img.shape[2]
    cdef Py_ssize_t cout = gout.shape[0], p = (k - 1) // 2
    out_arr = np.zeros((cout, cin, k, k), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t o, ci, i, j, y, x, yy, xx
    cdef double acc
    with nogil:
        for o in range(cout):
            for ci in range(cin):
                for i in range(k):
                    for j in range(k):
                        acc = 0.0
                        for y in range(h):
                            yy = y + i - p
                            if yy < 0 or yy >= h:
                                continue
                            for x in range(w):
                                xx = x + j - p
                                if xx < 0 or xx >= w:
                                    continue
                                acc += gout[o, y, x] * img[ci, yy, xx]
                        out[o, ci, i, j] = acc
    return out_arr


def resize_bilinear(double[:, :, ::1] img, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t c = img.shape[0], h = img.shape[1], w = img.shape[2]
    out_arr = np.zeros((c, out_h, out_w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double sy = h / <double>out_h, sx = w / <double>out_w
    cdef Py_ssize_t ch, y, x, y0, x0, y1, x1
    cdef double fy, fx, wy, wx, top, bot
    with nogil:
        for y in range(out_h):
            fy = (y + 0.5) * sy - 0.5
            if fy < 0.0:
                fy = 0.0
            if fy > h - 1:
                fy = h - 1
            y0 = <Py_ssize_t>fy
            y1 = y0 + 1
            if y1 > h - 1:
                y1 = h - 1
            wy = fy - y0
            for x in range(out_w):
                fx = (x + 0.5) * sx - 0.5
                if fx < 0.0:
                    fx = 0.0
                if fx > w - 1:
                    fx = w - 1
                x0 = <Py_ssize_t>fx
                x1 = x0 + 1
                if x1 > w - 1:
                    x1 = w - 1
                wx = fx - x0
                for ch in range(c):
                    top = img[ch, y0, x0] * (1.0 - wx) + img[ch, y0, x1] * wx
                    bot = img[ch, y1, x0] * (1.0 - wx) + img[ch, y1, x1] * wx
                    out[ch, y, x] = top * (1.0 - wy) + bot * wy
    return out_arr
