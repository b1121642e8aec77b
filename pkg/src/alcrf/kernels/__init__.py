"""Lattice kernel dispatch: compiled extension if built, NumPy otherwise.

Set ALCRF_PURE_PYTHON=1 to force the NumPy implementation.
"""

import os

from . import pykernels

if os.environ.get("ALCRF_PURE_PYTHON"):
    _impl = pykernels
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = pykernels

IMPL_NAME = _impl.NAME
batch_forward_backward = _impl.batch_forward_backward
batch_viterbi = _impl.batch_viterbi
