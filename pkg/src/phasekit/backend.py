"""Kernel backend selection: compiled Cython core with a numpy fallback.

The compiled module phasekit._kernels is preferred when importable; set
PHASEKIT_BACKEND=numpy (or =cython) to force a choice.  Both expose the same
functions with identical semantics; tests assert their agreement.
"""

import os

from . import _np_backend

_choice = os.environ.get("PHASEKIT_BACKEND", "auto").lower()

if _choice not in ("auto", "cython", "numpy"):
    raise RuntimeError(f"PHASEKIT_BACKEND must be auto, cython or numpy, not {_choice!r}")

_REQUIRED = ("dist_sq_batch", "dist_grad_batch", "inner_min_1", "inner_min_2", "admm_solve")

_impl = _np_backend
if _choice in ("auto", "cython"):
    try:
        from . import _kernels

        if not all(hasattr(_kernels, f) for f in _REQUIRED):
            raise ImportError("compiled kernel module is incomplete")
        _impl = _kernels
    except ImportError:
        if _choice == "cython":
            raise RuntimeError("compiled kernels requested but not built")
        _impl = _np_backend

NAME = _impl.NAME
dist_sq_batch = _impl.dist_sq_batch
dist_grad_batch = _impl.dist_grad_batch
inner_min_1 = _impl.inner_min_1
inner_min_2 = _impl.inner_min_2
admm_solve = _impl.admm_solve
CHECK_EVERY = _np_backend.CHECK_EVERY


def using_compiled_kernels():
    return NAME == "cython"
