"""Kernel backend selection.

The compiled Cython backend is preferred when its extension module is
importable; otherwise the numpy reference implementation is used.  Set
``COHORTNET_BACKEND=numpy`` or ``COHORTNET_BACKEND=native`` to force one
(forcing ``native`` raises if the extension was not built).
"""

from __future__ import annotations

import os

from . import numpy_backend

_forced = os.environ.get("COHORTNET_BACKEND", "").strip().lower()

if _forced == "numpy":
    _impl = numpy_backend
elif _forced == "native":
    from . import _native as _impl  # noqa: F401
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = numpy_backend

forward_batch = _impl.forward_batch
loss_and_grads = _impl.loss_and_grads
train_batch = _impl.train_batch
softmax = numpy_backend.softmax


def backend_name() -> str:
    return _impl.NAME


def available_backends() -> list[str]:
    names = [numpy_backend.NAME]
    try:
        from . import _native  # noqa: F401
        names.append(_native.NAME)
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Return a backend module by name (for benchmarks and parity tests)."""
    if name == "numpy":
        return numpy_backend
    if name == "native":
        from . import _native
        return _native
    raise ValueError(f"unknown backend {name!r}")
