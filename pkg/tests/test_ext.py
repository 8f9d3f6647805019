from __future__ import annotations

import numpy as np
import pytest

from hanzawa_mhd import _ext
from hanzawa_mhd import norms as nm

needs_cython = pytest.mark.skipif(_ext.BACKEND != "cython", reason="compiled kernel not built")


@needs_cython
@pytest.mark.parametrize("q,s", [(2.0, 0.5), (2.0, 0.25), (3.0, 0.4), (1.5, 0.7)])
def test_backends_agree(q, s):
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(300, 3))
    F = rng.normal(size=(300, 2))
    W = rng.uniform(0.5, 1.0, 300)
    expo = 3 + s * q
    a = nm.pair_sum(X, F, W, None, q, expo, backend="cython")
    b = nm.pair_sum(X, F, W, None, q, expo, backend="python")
    assert abs(a - b) <= 1e-12 * abs(b)


def test_python_backend_always_available():
    X = np.linspace(0, 1, 20)[:, None]
    F = X ** 2
    W = np.full(20, 1 / 20)
    assert nm.pair_sum(X, F, W, None, 2.0, 2.0, backend="python") > 0


def test_backend_name():
    assert _ext.BACKEND in ("cython", "python")
