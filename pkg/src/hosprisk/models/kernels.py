"""Backend selection for the tree kernels.

The compiled extension is used when importable; set ``HOSPRISK_PURE_PYTHON=1``
to force the NumPy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("HOSPRISK_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py

GINI = _kernels_py.GINI
MSE = _kernels_py.MSE


def use_backend(name):
    """Switch backend at runtime (``"cython"`` or ``"python"``); returns the previous name."""
    global _impl, BACKEND
    previous = BACKEND
    if name == "python":
        _impl = _kernels_py
    elif name == "cython":
        from . import _kernels

        _impl = _kernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    BACKEND = name
    return previous


def best_split(X, y, w, idx, features, min_leaf, criterion):
    return _impl.best_split(X, y, w, idx, features, min_leaf, criterion)


def apply_tree(X, feature, threshold, left, right):
    return _impl.apply_tree(X, feature, threshold, left, right)
