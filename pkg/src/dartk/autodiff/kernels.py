"""Kernel backend selection.

The compiled extension is used when it imports; ``DARTK_PURE_PYTHON=1``
forces the numpy kernels. Float64 inputs always take the numpy path.
"""
import os

from . import _npkernels

try:
    if os.environ.get("DARTK_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python kernels requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

_active = _ckernels if _ckernels is not None else _npkernels


def backend_name() -> str:
    return _active.NAME


def available() -> list[str]:
    return [m.NAME for m in (_ckernels, _npkernels) if m is not None]


def use(name: str) -> None:
    """Switch backend at runtime ('cython' or 'numpy')."""
    global _active
    if name == "numpy":
        _active = _npkernels
    elif name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        _active = _ckernels
    else:
        raise ValueError(f"unknown backend {name!r}")


def _pick(x):
    return _active if x.dtype.itemsize == 4 else _npkernels


def conv1d_forward(x, w, b, pad):
    return _pick(x).conv1d_forward(x, w, b, pad)


def conv1d_backward(ctx, gy, need_input_grad=True):
    return _pick(gy).conv1d_backward(ctx, gy, need_input_grad)


def batchnorm_train_forward(x, gamma, beta, eps):
    return _pick(x).batchnorm_train_forward(x, gamma, beta, eps)


def batchnorm_train_backward(ctx, gamma, gy):
    return _pick(gy).batchnorm_train_backward(ctx, gamma, gy)
