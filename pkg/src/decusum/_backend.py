"""Simulation kernel backend selection.

The compiled extension is preferred when importable; the pure-Python
reference kernel is the fallback. Both implement the same functions with
bitwise-identical output, so the choice only affects speed. Set the
environment variable DECUSUM_BACKEND to "python" or "compiled" to force
one (the latter raises if the extension is unavailable), or call
set_backend() at runtime.
"""

from __future__ import annotations

import os

from . import _reference

try:
    from . import _speedups
except ImportError:  # extension not built
    _speedups = None

_BACKENDS = {"python": _reference}
if _speedups is not None:
    _BACKENDS["compiled"] = _speedups


def _initial() -> str:
    forced = os.environ.get("DECUSUM_BACKEND")
    if forced:
        if forced not in ("python", "compiled"):
            raise RuntimeError(f"DECUSUM_BACKEND must be 'python' or 'compiled', got {forced!r}")
        if forced not in _BACKENDS:
            raise RuntimeError("DECUSUM_BACKEND=compiled but the extension is not built")
        return forced
    return "compiled" if "compiled" in _BACKENDS else "python"


_active = _initial()


def backend_name() -> str:
    """Name of the kernel backend in use ('compiled' or 'python')."""
    return _active


def available_backends() -> tuple:
    return tuple(sorted(_BACKENDS))


def set_backend(name: str) -> None:
    """Switch kernel backend; raises if the requested one is unavailable."""
    global _active
    if name not in _BACKENDS:
        raise RuntimeError(f"backend {name!r} unavailable; have {available_backends()}")
    _active = name


def kernel():
    """The active kernel module."""
    return _BACKENDS[_active]
