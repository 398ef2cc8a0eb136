"""Hot-kernel backend selection.

The env flag EMPIC_KERNELS picks the implementation:

    EMPIC_KERNELS=numba   numba @njit kernels (default when importable)
    EMPIC_KERNELS=numpy   pure-numpy fallback

Both backends expose the same functions; `get_backend` returns a module
so benchmarks and tests can drive both in one process.
"""
from __future__ import annotations

import os

import numpy as np

from . import numpy_backend

_ENV_FLAG = "EMPIC_KERNELS"

try:
    from . import numba_backend
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but degrade
    numba_backend = None
    _HAVE_NUMBA = False


class KernelConfigError(RuntimeError):
    pass


def available_backends() -> tuple[str, ...]:
    return ("numba", "numpy") if _HAVE_NUMBA else ("numpy",)


def get_backend(name: str | None = None):
    """Resolve a backend module from a name, the env flag, or the default."""
    if name is None or name == "auto":
        name = os.environ.get(_ENV_FLAG, "").strip().lower() or \
            ("numba" if _HAVE_NUMBA else "numpy")
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        if not _HAVE_NUMBA:
            raise KernelConfigError(
                "numba backend requested but numba is not importable")
        return numba_backend
    raise KernelConfigError(
        f"unknown kernel backend {name!r} (use 'numba' or 'numpy')")


def warmup(backend=None) -> None:
    """Trigger JIT compilation outside timed regions (no-op for numpy)."""
    kern = backend if backend is not None else get_backend()
    if kern.NAME != "numba":
        return
    g = 2
    shape = (4 + 2 * g,) * 3
    f = [np.zeros(shape) for _ in range(10)]
    kern.advance_b_half(f[0], f[1], f[2], f[3], f[4], f[5], g, 0.1, 0.1, 0.1)
    kern.advance_e(f[3], f[4], f[5], f[0], f[1], f[2], f[6], f[7], f[8],
                   g, 0.1, 0.1, 0.1, 0.1)
    for contiguous in (True, False):
        if contiguous:
            arrs = [np.zeros(2) for _ in range(13)]
        else:
            backing = np.zeros((2, 14))
            arrs = [backing[:, i] for i in range(13)]
        (x, y, z, px, py, pz, w, epx, epy, epz, bpx, bpy, bpz) = arrs
        x += 1.0
        y += 1.0
        z += 1.0
        w += 1.0
        kern.gather_eb(x, y, z, 2, f[3], f[4], f[5], f[0], f[1], f[2],
                       1.0, 1.0, 1.0, 0, 0, 0, g, epx, epy, epz, bpx, bpy, bpz)
        kern.boris_push(px, py, pz, 2, epx, epy, epz, bpx, bpy, bpz,
                        -1.0, 1.0, 0.1)
        kern.move(x, y, z, px, py, pz, 2, 1.0, 0.1, 1.0, 1.0, 1.0)
        kern.deposit_current(x, y, z, x, y, z, w, 2, f[6], f[7], f[8], -1.0,
                             1.0, 1.0, 1.0, 0, 0, 0, g, 1.0, 1.0, 1.0)
        kern.deposit_cic(x, y, z, w, 2, f[9], 1.0, 1.0, 1.0, 1.0, 0, 0, 0, g)
