"""Kernel backend selection: numba-jitted loops or pure numpy.

The default backend is "numba" whenever numba imports successfully; set the
environment variable CATABIRD_DISABLE_NUMBA=1 to force the pure-numpy path.
CATABIRD_THREADS caps the numba threading layer used by parallel kernels.
"""

import os

# the sandbox TBB is too old for numba; prefer the layers that work
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


_backend = "numpy" if (_env_flag("CATABIRD_DISABLE_NUMBA") or not HAVE_NUMBA) else "numba"


def current_backend() -> str:
    """Return the active kernel backend, "numba" or "numpy"."""
    return _backend


def set_backend(name: str) -> None:
    """Switch kernel backend at runtime (used by tests and benchmarks)."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _backend = name


def configure_threads() -> int:
    """Apply the CATABIRD_THREADS cap to numba's threading layer.

    Returns the number of threads in effect (1 when numba is absent).
    """
    if not HAVE_NUMBA:
        return 1
    raw = os.environ.get("CATABIRD_THREADS", "").strip()
    if raw:
        n = max(1, int(raw))
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return numba.get_num_threads()
