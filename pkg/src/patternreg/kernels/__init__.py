"""Backend selection for the hot numeric kernels.

PATTERNREG_BACKEND=numba  force the numba JIT kernels (error if unavailable)
PATTERNREG_BACKEND=numpy  force the pure-numpy fallback
unset / auto              numba when importable, numpy otherwise

See benchmarks/bench_kernels.py for a speed and agreement comparison.
"""

import os

_choice = os.environ.get("PATTERNREG_BACKEND", "auto").lower()

if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"PATTERNREG_BACKEND={_choice!r} is not one of auto/numba/numpy")

if _choice == "numpy":
    from . import numpy_impl as _impl
    BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _impl
        BACKEND = "numba"
    except ImportError:
        if _choice == "numba":
            raise RuntimeError(
                "PATTERNREG_BACKEND=numba but numba is not importable")
        from . import numpy_impl as _impl
        BACKEND = "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
linear_forward = _impl.linear_forward
linear_backward = _impl.linear_backward
