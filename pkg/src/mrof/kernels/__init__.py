"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``MROF_NUMBA`` is not set to
``0``/``false``/``off``. Both backends stay importable so tests and the
benchmark can compare them directly::

    MROF_NUMBA=0 pytest            # run everything on the numpy path
"""

import os

from . import numpy_impl


def _numba_requested() -> bool:
    return os.environ.get("MROF_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


try:
    from . import numba_impl
except ImportError:  # numba missing
    numba_impl = None

USE_NUMBA = numba_impl is not None and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"
_impl = numba_impl if USE_NUMBA else numpy_impl

edge_geometry = _impl.edge_geometry
tv_assemble = _impl.tv_assemble
scatter_gradient = _impl.scatter_gradient
taut_string = _impl.taut_string
brute_force_scan = _impl.brute_force_scan

__all__ = [
    "BACKEND",
    "USE_NUMBA",
    "brute_force_scan",
    "edge_geometry",
    "numba_impl",
    "numpy_impl",
    "scatter_gradient",
    "taut_string",
    "tv_assemble",
]
