"""Hot kernels: compiled extension when available, numpy fallback otherwise.

Set ``HANZAWA_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pairsum_py

BACKEND = "python"
pair_sum_rows = _pairsum_py.pair_sum_rows

if os.environ.get("HANZAWA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._pairsum import pair_sum_rows  # type: ignore[no-redef]  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

python_pair_sum_rows = _pairsum_py.pair_sum_rows
