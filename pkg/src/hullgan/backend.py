"""Kernel backend selection.

Set HULLGAN_USE_NUMBA=0 to force the pure-numpy kernels, =1 to require the
numba ones (ImportError if numba is absent). Default is numba when available.
``benchmarks/backend_bench.py`` compares the two paths.
"""

import os


def _select():
    flag = os.environ.get("HULLGAN_USE_NUMBA", "auto").strip().lower()
    if flag in ("0", "false", "no", "off"):
        from . import _kernels_numpy as kernels
        return kernels, False
    try:
        from . import _kernels_numba as kernels
        return kernels, True
    except ImportError:
        if flag in ("1", "true", "yes", "on"):
            raise
        from . import _kernels_numpy as kernels
        return kernels, False


K, USING_NUMBA = _select()
