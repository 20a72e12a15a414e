"""Kernel selection: compiled extension when available, pure Python otherwise.

Set ZDE_KERNELS=py to force the pure backend, ZDE_KERNELS=c to require the
compiled one (ImportError if it was not built).
"""

from __future__ import annotations

import os

from . import _pure

_choice = os.environ.get("ZDE_KERNELS", "auto").lower()

if _choice == "py":
    _impl = _pure
elif _choice == "c":
    from . import _fast as _impl  # noqa: F401  (hard requirement)
elif _choice == "auto":
    try:
        from . import _fast as _impl
    except ImportError:
        _impl = _pure
else:
    raise RuntimeError(f"ZDE_KERNELS must be c, py or auto, got {_choice!r}")

BACKEND = _impl.BACKEND
pattern_codes = _impl.pattern_codes

MAX_CODE_BITS = 63


def code_width_ok(base: int, cells: int) -> bool:
    """Whether base**cells fits the unsigned code word."""
    return base**cells <= 2**MAX_CODE_BITS
