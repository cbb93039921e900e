"""Kernel backend selection.

Hot loops ship twice: a numba ``@njit`` kernel and a pure-numpy path.
Setting ``PERSPDEFORM_DISABLE_NUMBA=1`` in the environment (or calling
:func:`set_backend`) routes every dispatcher to the numpy path.
"""

from __future__ import annotations

import contextlib
import os

try:
    import numba

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # skip probing an outdated system TBB
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

ENV_FLAG = "PERSPDEFORM_DISABLE_NUMBA"

_BACKENDS = ("numba", "numpy")


def _default_backend() -> str:
    disabled = os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}
    return "numba" if HAVE_NUMBA and not disabled else "numpy"


_backend = _default_backend()


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {_BACKENDS}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not importable")
    _backend = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching, or a no-op without numba."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda fn: fn


if HAVE_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range
