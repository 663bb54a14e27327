"""Backend selection for the hot kernels.

The compiled Cython module is used when it was built; otherwise (or when
``TLRELEVANCE_BACKEND=python`` is set) the numpy implementations are used.
Both produce identical results.
"""
import os
from types import SimpleNamespace

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_NAMES = ("iou_matrix", "greedy_match", "best_split", "predict_raw")


def _namespace(mod, name):
    return SimpleNamespace(name=name, **{fn: getattr(mod, fn) for fn in _NAMES})


PYTHON = _namespace(_pykernels, "python")
CYTHON = _namespace(_ckernels, "cython") if _ckernels is not None else None


def available_backends():
    return [b.name for b in (CYTHON, PYTHON) if b is not None]


def get_backend(name=None):
    """Return the kernel namespace for ``name`` ("cython", "python" or None for the default)."""
    if name is None:
        return _active
    if name == "python":
        return PYTHON
    if name == "cython":
        if CYTHON is None:
            raise RuntimeError("Cython kernels are not built; reinstall with a C compiler available")
        return CYTHON
    raise ValueError(f"unknown backend {name!r}")


_requested = os.environ.get("TLRELEVANCE_BACKEND", "").strip().lower()
if _requested == "python" or CYTHON is None:
    _active = PYTHON
else:
    _active = CYTHON


def set_backend(name):
    """Switch the process-wide default backend; returns the previous name."""
    global _active, BACKEND, iou_matrix, greedy_match, best_split, predict_raw
    previous = _active.name
    _active = get_backend(name)
    BACKEND = _active.name
    iou_matrix = _active.iou_matrix
    greedy_match = _active.greedy_match
    best_split = _active.best_split
    predict_raw = _active.predict_raw
    return previous


set_backend(_active.name)
