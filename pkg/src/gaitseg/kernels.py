"""Dispatch for the numerical hot loops.

The compiled extension ``gaitseg._kernels`` is used when it imports; otherwise
the NumPy fallback in ``gaitseg._kernels_py`` is used. Setting the environment
variable ``GAITSEG_PURE_PYTHON=1`` forces the fallback.
"""

import contextlib
import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled

if os.environ.get("GAITSEG_PURE_PYTHON") or _compiled is None:
    _impl = _kernels_py
else:
    _impl = _compiled


def available_backends():
    return sorted(_BACKENDS)


def backend():
    """Name of the active backend, ``"cython"`` or ``"python"``."""
    return "cython" if _impl is _compiled and _compiled is not None else "python"


def get_backend_module(name):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}") from None


def set_backend(name):
    global _impl
    _impl = get_backend_module(name)


@contextlib.contextmanager
def using_backend(name):
    global _impl
    previous = _impl
    _impl = get_backend_module(name)
    try:
        yield
    finally:
        _impl = previous


def row_entropy(levels):
    """Shannon entropy (bits) of the 256-level histogram of each row of a uint8 image."""
    return _impl.row_entropy(np.ascontiguousarray(levels, dtype=np.uint8))


def lars_gammas(corr, direction, common, active, tol=1e-12):
    """Step length at which each inactive group's correlation norm meets the common level.

    ``inf`` for active groups and for groups that never meet it within ``[0, 1]``.
    """
    return _impl.lars_gammas(
        np.ascontiguousarray(corr, dtype=np.float64),
        np.ascontiguousarray(direction, dtype=np.float64),
        float(common),
        np.ascontiguousarray(active, dtype=np.uint8),
        tol,
    )


def sq_distances(gallery, query):
    return _impl.sq_distances(
        np.ascontiguousarray(gallery, dtype=np.float64),
        np.ascontiguousarray(query, dtype=np.float64),
    )
