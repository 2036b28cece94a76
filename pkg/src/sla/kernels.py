"""Backend selection for the recurrent scans.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy fallback.  Setting ``SLA_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback

_compiled = None
if os.environ.get("SLA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"

__all__ = ["BACKEND", "available_backends", "decay_scan", "delta_scan", "get_backend"]


def available_backends() -> list[str]:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return ["python"]
    return ["compiled", "python"]


def get_backend(name: str | None = None):
    """Module implementing the scans; ``None`` means the import-time choice."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def decay_scan(q, k, v, decay=None, s0=None, backend: str | None = None):
    impl = get_backend(backend)
    if s0 is None:
        s0 = np.zeros((q.shape[1], v.shape[1]))
    return impl.decay_scan(_c(q), _c(k), _c(v), None if decay is None else _c(decay), _c(s0))


def delta_scan(q, k, v, beta, alpha, s0=None, backend: str | None = None):
    impl = get_backend(backend)
    if s0 is None:
        s0 = np.zeros((q.shape[1], v.shape[1]))
    return impl.delta_scan(_c(q), _c(k), _c(v), _c(beta), _c(alpha), _c(s0))
