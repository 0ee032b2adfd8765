"""Numba switch.

Hot kernels are compiled with ``numba.njit`` when numba is importable and the
environment variable ``FLUXCHAIN_DISABLE_NUMBA`` is unset (or ``0``). Otherwise
the pure-numpy implementations are used. The flag is read once at import.
"""

from __future__ import annotations

import os

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and os.environ.get("FLUXCHAIN_DISABLE_NUMBA", "0") in ("", "0")

