"""Hot kernels with a compiled backend and a numpy/pure-Python fallback.

The compiled extension is used when it imports; set ``MSTRE_PURE_PYTHON=1``
to force the fallback.  ``BACKEND`` names the active one.
"""

import os

from . import _fallback

fallback = _fallback

if os.environ.get("MSTRE_PURE_PYTHON"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _ext as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

compiled = _impl if BACKEND == "cython" else None

hmm_forward_backward = _impl.hmm_forward_backward
hmm_viterbi = _impl.hmm_viterbi
edit_ops = _impl.edit_ops

__all__ = ["BACKEND", "edit_ops", "fallback", "compiled", "hmm_forward_backward", "hmm_viterbi"]
