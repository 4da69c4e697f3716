"""Kernel engine selection.

Two interchangeable engines provide the hot per-tile kernels: the compiled
Cython core (`tilecert._kernels._core`) and the pure-numpy fallback
(`tilecert._kernels.reference`). The compiled core is preferred when it
imported cleanly; set TILECERT_KERNELS=python or =ext to force one, or call
`use()` at runtime (used by the benchmark and the parity tests).
"""

import os

from . import reference

try:
    from . import _core
except ImportError:
    _core = None

_ENGINES = {"python": reference}
if _core is not None:
    _ENGINES["ext"] = _core

_forced = os.environ.get("TILECERT_KERNELS", "auto").strip().lower()
if _forced in ("", "auto"):
    _active = _ENGINES.get("ext", reference)
elif _forced in _ENGINES:
    _active = _ENGINES[_forced]
else:
    raise ImportError(
        f"TILECERT_KERNELS={_forced!r} requested but only "
        f"{sorted(_ENGINES)} are available"
    )


def active():
    """The engine module currently in use."""
    return _active


def active_name():
    return _active.NAME


def available():
    return sorted(_ENGINES)


def use(name):
    """Switch engines ("python" or "ext"); returns the previous name."""
    global _active
    if name not in _ENGINES:
        raise ValueError(f"unknown kernel engine {name!r}; have {sorted(_ENGINES)}")
    prev = _active.NAME
    _active = _ENGINES[name]
    return prev
