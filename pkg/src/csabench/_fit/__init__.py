"""Fit-kernel backend selection.

The compiled kernel is preferred when its extension module imported cleanly;
otherwise the numpy implementation takes over. Setting the environment
variable ``CSABENCH_PURE_PYTHON`` to a non-empty value other than ``0``
forces the fallback (used by the cross-backend tests and the benchmark).
"""

from __future__ import annotations

import os

from . import _pykernel


def _want_pure() -> bool:
    return os.environ.get("CSABENCH_PURE_PYTHON", "").strip() not in ("", "0")


if _want_pure():
    _impl = _pykernel
    BACKEND = "python"
else:
    try:
        from . import _kernel as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernel
        BACKEND = "python"

fit_pairs = _impl.fit_pairs

__all__ = ["fit_pairs", "BACKEND"]
