"""Hot-loop kernels with backend selection at import time.

The compiled extension (``_ckernels``) is preferred; the pure-numpy
``fallback`` module is used when the extension is missing or when the
environment variable ``MULTITRANS_PURE=1`` forces it (useful for the
backend-parity tests and the benchmark).
"""

import os

from . import fallback

if os.environ.get("MULTITRANS_PURE") == "1":
    _impl = fallback
    BACKEND = "fallback"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = fallback
        BACKEND = "fallback"

gelu_forward = _impl.gelu_forward
gelu_backward = _impl.gelu_backward
softmax_rows = _impl.softmax_rows
softmax_rows_backward = _impl.softmax_rows_backward
layer_norm_forward = _impl.layer_norm_forward
layer_norm_backward = _impl.layer_norm_backward
