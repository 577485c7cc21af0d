"""Kernel backend selection.

The compiled Cython module is used when importable; otherwise the numpy
fallback. Set ``RBFDEFLATE_BACKEND=python`` to force the fallback.
"""
import logging
import os
from types import ModuleType

from . import _pykernels

logger = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` (default: the active one)."""
    if name is None:
        return kernels
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown or unavailable backend {name!r}; have {available_backends()}"
        ) from None


def _select() -> tuple[str, ModuleType]:
    wanted = os.environ.get("RBFDEFLATE_BACKEND", "").strip().lower()
    if wanted:
        return wanted, get_backend(wanted)
    if _ckernels is not None:
        return "cython", _ckernels
    logger.info("compiled kernels unavailable, using numpy fallback")
    return "python", _pykernels


BACKEND, kernels = _select()
