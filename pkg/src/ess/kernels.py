"""Frontal kernel dispatch: compiled extension when available, else numpy.

Set ``ESS_PURE_PYTHON=1`` to force the numpy fallback.
"""

import importlib
import os

from . import _pykernels


def load(name: str):
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module("ess._kernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    if os.environ.get("ESS_PURE_PYTHON"):
        return _pykernels
    try:
        return load("cython")
    except ImportError:
        return _pykernels


impl = _select()
BACKEND = impl.NAME
dense_lu = impl.dense_lu
scatter_add = impl.scatter_add
scatter_entries = impl.scatter_entries
front_forward = impl.front_forward
front_backward = impl.front_backward
