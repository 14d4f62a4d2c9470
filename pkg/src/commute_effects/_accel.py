"""Optional numba acceleration.

Hot kernels ship twice: a loop form compiled with ``numba.njit`` and a
vectorised pure-numpy form. The numba path is used when numba imports and
the environment variable ``COMMUTE_EFFECTS_DISABLE_NUMBA`` is unset or falsy.
"""

from __future__ import annotations

import os

_FALSY = {"", "0", "false", "no", "off"}


def _env_disabled() -> bool:
    return os.environ.get("COMMUTE_EFFECTS_DISABLE_NUMBA", "").strip().lower() not in _FALSY


try:
    import numba as _numba
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None
else:
    # the bundled TBB is too old on some hosts; OpenMP avoids the warning
    if "NUMBA_THREADING_LAYER" not in os.environ:
        _numba.config.THREADING_LAYER = "omp"

NUMBA_INSTALLED = _numba is not None


def use_numba() -> bool:
    """Whether dispatchers should route to the compiled kernels."""
    return NUMBA_INSTALLED and not _env_disabled()


def resolve_backend(backend: str | None) -> str:
    """Map ``None``/"auto"/"numba"/"numpy" to a concrete backend name."""
    if backend in (None, "auto"):
        return "numba" if use_numba() else "numpy"
    if backend == "numba":
        if not NUMBA_INSTALLED:
            raise RuntimeError("numba backend requested but numba is not installed")
        return "numba"
    if backend == "numpy":
        return "numpy"
    raise ValueError(f"unknown backend {backend!r}")


def set_threads(n: int | None) -> None:
    if n and NUMBA_INSTALLED:
        _numba.set_num_threads(max(1, min(int(n), _numba.config.NUMBA_NUM_THREADS)))


if NUMBA_INSTALLED:
    njit = _numba.njit
    prange = _numba.prange
else:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

    prange = range
