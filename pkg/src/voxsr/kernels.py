"""Backend selection for the convolution and pooling kernels.

The compiled extension is used when it imports cleanly; otherwise the numpy
fallback is used. Set ``VOXSR_KERNELS=python`` to force the fallback.
"""
import logging
import os

import numpy as np

from . import _pykernels

logger = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

if _ckernels is not None and os.environ.get("VOXSR_KERNELS", "").lower() != "python":
    BACKEND = "cython"
else:
    if _ckernels is None:
        logger.debug("compiled kernels unavailable, using numpy fallback")
    BACKEND = "python"
_impl = BACKENDS[BACKEND]


def use_backend(name):
    """Switch the active backend at runtime (used by tests and the benchmark)."""
    global BACKEND, _impl
    if name not in BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}")
    BACKEND, _impl = name, BACKENDS[name]


def _contig(a):
    return a if a.flags.c_contiguous else np.ascontiguousarray(a)


def im2col3d(x, kernel, stride, padding):
    return _impl.im2col3d(_contig(x), tuple(kernel), tuple(stride), tuple(padding))


def col2im3d(cols, shape, kernel, stride, padding):
    return _impl.col2im3d(_contig(cols), tuple(shape), tuple(kernel), tuple(stride), tuple(padding))


def maxpool3d_forward(x):
    return _impl.maxpool3d_forward(_contig(x))


def maxpool3d_backward(grad, idx, shape):
    return _impl.maxpool3d_backward(_contig(grad), _contig(idx), tuple(shape))
