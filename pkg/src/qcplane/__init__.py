"""Numerical toolkit for planar quasiconformal maps and gradient Young measures."""

import os

__version__ = "0.1.0"

# QCPLANE_THREADS caps the BLAS/OpenMP pools; must be set before numpy loads.
_threads = os.environ.get("QCPLANE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from .errors import PreconditionError, QCPlaneError, SchemaError  # noqa: E402,F401
from .planar_maps import GridMap, Rect  # noqa: E402,F401
