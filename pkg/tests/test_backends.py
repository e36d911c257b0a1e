"""The compiled and NumPy kernel backends must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from sdattack import _kernels_np

try:
    from sdattack import _kernels
except ImportError:
    _kernels = None

needs_compiled = pytest.mark.skipif(_kernels is None, reason="compiled extension not built")


@needs_compiled
class TestBackendEquivalence:
    def test_conv2d_same_single(self, rng):
        for k in (1, 3, 7):
            img = rng.normal(size=(3, 10, 11))
            ker = rng.normal(size=(k, k))
            np.testing.assert_allclose(
                _kernels.conv2d_same_single(img, ker),
                _kernels_np.conv2d_same_single(img, ker),
                rtol=1e-13,
                atol=1e-13,
            )

    def test_conv2d_same_multi(self, rng):
        img = rng.normal(size=(2, 9, 9))
        weights = rng.normal(size=(5, 2, 3, 3))
        np.testing.assert_allclose(
            _kernels.conv2d_same_multi(img, weights),
            _kernels_np.conv2d_same_multi(img, weights),
            rtol=1e-13,
            atol=1e-13,
        )

    def test_conv2d_same_weight_grad(self, rng):
        img = rng.normal(size=(2, 8, 8))
        gout = rng.normal(size=(4, 8, 8))
        np.testing.assert_allclose(
            _kernels.conv2d_same_weight_grad(img, gout, 3),
            _kernels_np.conv2d_same_weight_grad(img, gout, 3),
            rtol=1e-13,
            atol=1e-13,
        )

    def test_resize_bilinear(self, rng):
        img = rng.uniform(size=(3, 7, 5))
        for h, w in ((7, 5), (3, 3), (14, 11), (1, 1)):
            np.testing.assert_allclose(
                _kernels.resize_bilinear(img, h, w),
                _kernels_np.resize_bilinear(img, h, w),
                rtol=1e-13,
                atol=1e-13,
            )


def test_env_var_selects_numpy_backend():
    code = "import sdattack.backend as b; print(b.BACKEND_NAME)"
    env = dict(os.environ, SDATTACK_BACKEND="numpy")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "numpy"


@needs_compiled
def test_default_backend_is_compiled_when_built():
    from sdattack.backend import BACKEND_NAME

    assert BACKEND_NAME == "compiled"
