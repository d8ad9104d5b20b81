"""Optional numba acceleration.

Hot kernels are written once as plain loops.  When numba is importable and
``HOLOLEARN_DISABLE_NUMBA`` is unset (or ``0``), they are compiled with
``njit``; otherwise a vectorised numpy twin is used instead.
"""
import os


def _noop_jit(*args, **kwargs):
    """Stand-in for ``njit`` that returns the function unchanged."""
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(f):
        return f

    return wrap


def _have_numba():
    try:
        import numba  # noqa: F401

        return True
    except ImportError:
        return False


HAVE_NUMBA = _have_numba()
DISABLED = os.environ.get("HOLOLEARN_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")
USE_NUMBA = HAVE_NUMBA and not DISABLED

if HAVE_NUMBA:
    from numba import njit
else:
    njit = _noop_jit
