"""Kernel backend selection.

The compiled extension (_ck) is preferred when it imported cleanly; setting
TIMESYNC_PURE=1 forces the numpy fallback. Both expose the same four
functions with identical semantics.
"""

import os

from . import ref

if os.environ.get("TIMESYNC_PURE", "") == "1":
    _impl = ref
else:
    try:
        from . import _ck as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = ref

BACKEND = _impl.NAME

bias_mask_softmax = _impl.bias_mask_softmax
masked_softmax_backward = _impl.masked_softmax_backward
layer_norm_forward = _impl.layer_norm_forward
layer_norm_backward = _impl.layer_norm_backward

__all__ = [
    "BACKEND",
    "bias_mask_softmax",
    "masked_softmax_backward",
    "layer_norm_forward",
    "layer_norm_backward",
    "ref",
]
