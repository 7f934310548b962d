"""Hot kernels: compiled Cython core with a pure numpy fallback.

The compiled module is used when it imports; setting ``FPSI_PURE_PYTHON=1``
forces the fallback. ``backend`` holds the selected module and ``BACKEND``
its name. Both modules expose identical functions.
"""
import os

from . import _pykernels

backend = _pykernels
if os.environ.get("FPSI_PURE_PYTHON", "0") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as backend
    except ImportError:  # not built
        backend = _pykernels

BACKEND = backend.NAME


def available_backends():
    """Return the importable kernel modules keyed by name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
