"""Kernel backend selection.

The scaling-iteration kernels exist twice: a compiled Cython extension
(``setmatch._fastloops``) and a pure-NumPy fallback
(``setmatch._kernels_numpy``) with identical semantics.  The compiled
backend is preferred when the extension imported successfully; the
environment variable ``SETMATCH_BACKEND`` (``auto``, ``compiled`` or
``python``) overrides the default, and solver calls may pin a backend
explicitly.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_numpy

try:
    from . import _fastloops  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build environment
    _fastloops = None

_IMPLEMENTATIONS: dict[str, ModuleType] = {"python": _kernels_numpy}
if _fastloops is not None:
    _IMPLEMENTATIONS["compiled"] = _fastloops

_ENV_VAR = "SETMATCH_BACKEND"


def available_backends() -> tuple[str, ...]:
    """Names of the usable kernel backends, alphabetically."""
    return tuple(sorted(_IMPLEMENTATIONS))


def default_backend() -> str:
    """Backend used when a solver is called with ``backend='auto'``."""
    forced = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if forced in ("", "auto"):
        return "compiled" if "compiled" in _IMPLEMENTATIONS else "python"
    if forced not in _IMPLEMENTATIONS:
        raise ValueError(
            f"{_ENV_VAR}={forced!r} is not available; choose from "
            f"{('auto',) + available_backends()}"
        )
    return forced


def resolve_backend(name: str = "auto") -> tuple[str, ModuleType]:
    """Map a backend name to its kernel module."""
    if name in (None, "auto"):
        name = default_backend()
    module = _IMPLEMENTATIONS.get(name)
    if module is None:
        raise ValueError(
            f"unknown kernel backend {name!r}; available: {('auto',) + available_backends()}"
        )
    return name, module
