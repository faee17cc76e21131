"""Flow-kernel backend selection.

The native (Cython) kernels are used when the compiled module imported
successfully and ``LYAPGEN_PURE`` is not set; the numpy fallback covers
everything else, including user-supplied vector fields that have no
compiled counterpart.
"""

import os

from . import pyref
from .pyref import BUDGET, ESCAPE, OK

try:
    from . import _native
except ImportError:
    _native = None

_FORCE_PURE = os.environ.get("LYAPGEN_PURE", "") not in ("", "0")

HAVE_NATIVE = _native is not None and not _FORCE_PURE
BACKEND = "native" if HAVE_NATIVE else "python"


def native_module():
    """The compiled module if importable (ignores LYAPGEN_PURE); else None."""
    return _native
