"""Numba dispatch.

Hot kernels are written twice: a loop version compiled with ``numba.njit`` and a
vectorised numpy version. Set ``HIERFOLIO_DISABLE_NUMBA=1`` to force the numpy path
(useful on platforms without an LLVM toolchain, or to cross-check results).
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency, but stay usable
    numba = None

_FLAG = "HIERFOLIO_DISABLE_NUMBA"


def numba_enabled():
    if numba is None:
        return False
    return os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, else the identity decorator."""
    kwargs.setdefault("cache", True)
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def dispatch(jit_impl, numpy_impl):
    """Pick an implementation at call time so the env flag can be flipped in tests."""

    def call(*args):
        if numba_enabled():
            return jit_impl(*args)
        return numpy_impl(*args)

    call.jit = jit_impl
    call.numpy = numpy_impl
    call.__name__ = numpy_impl.__name__.replace("_np", "")
    call.__doc__ = numpy_impl.__doc__
    return call
