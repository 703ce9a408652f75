"""Hot kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; set ``MESHFORGE_PURE=1``
to force the fallback.
"""
import logging
import os

import numpy as np

from . import _pykernels

log = logging.getLogger(__name__)

try:
    if os.environ.get("MESHFORGE_PURE", "") not in ("", "0"):
        raise ImportError("fallback forced by MESHFORGE_PURE")
    from . import _ckernels
except ImportError as exc:  # pragma: no cover - depends on the build
    _ckernels = None
    log.debug("compiled kernels unavailable (%s); using numpy fallback", exc)

BACKEND = "cython" if _ckernels is not None else "python"


def available_backends():
    return ("cython", "python") if _ckernels is not None else ("python",)


def get_backend(name=None):
    """Module implementing the kernels: ``"cython"``, ``"python"`` or default."""
    name = name or BACKEND
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _c64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def spring_forces(pos, vel, si, sj, rest, k, kd, backend=None):
    return get_backend(backend).spring_forces(_c64(pos), _c64(vel), _i64(si), _i64(sj),
                                              _c64(rest), _c64(k), _c64(kd))


def spring_jacobian_blocks(pos, si, sj, rest, k, kd, clamp=False, backend=None):
    return get_backend(backend).spring_jacobian_blocks(_c64(pos), _i64(si), _i64(sj), _c64(rest),
                                                       _c64(k), _c64(kd), bool(clamp))


def capsule_resolve(pos, vel, cap_a, cap_b, radius, eps, friction, max_passes=8, backend=None):
    """In place on ``pos`` and ``vel`` (must be C-contiguous float64)."""
    return get_backend(backend).capsule_resolve(pos, vel, _c64(cap_a).reshape(-1, 3),
                                                _c64(cap_b).reshape(-1, 3), _c64(radius),
                                                float(eps), float(friction), int(max_passes))


def rasterize(screen, depth, faces, zbuf, near=1e-3, backend=None):
    """In place on ``zbuf`` (C-contiguous float64)."""
    return get_backend(backend).rasterize(_c64(screen), _c64(depth), _i64(faces).reshape(-1, 3),
                                          zbuf, float(near))
