"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``BILEVEL_BOUNDS_PURE_PYTHON`` is set to a true value,
the numpy implementation is used.  Both expose the same functions.
"""
import os

from . import _pykernels

_force_python = os.environ.get("BILEVEL_BOUNDS_PURE_PYTHON", "").lower() in ("1", "true", "yes")

_impl = _pykernels
BACKEND = "python"
if not _force_python:
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

upsilon = _impl.upsilon
upsilon_d1 = _impl.upsilon_d1
upsilon_d2 = _impl.upsilon_d2
nc_chain = _impl.nc_chain
agd_quadratic = _impl.agd_quadratic
gd_quadratic = _impl.gd_quadratic


def available_backends():
    """Return the kernel modules that can be imported, keyed by name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
