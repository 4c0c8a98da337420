"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the NumPy
fallback. Set ``XVIEWGEO_BACKEND=python`` to force the fallback.
"""

import os

from . import _pykernels

BACKENDS = {"python": _pykernels}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["compiled"] = _compiled

_requested = os.environ.get("XVIEWGEO_BACKEND", "").strip().lower()
if _requested == "python" or _compiled is None:
    default = "python"
else:
    default = "compiled"


def get(name=None):
    """Kernel module by name; ``None`` means the import-time default."""
    name = name or default
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


def available():
    return sorted(BACKENDS)
