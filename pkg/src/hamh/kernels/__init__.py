"""Hot kernels with a compiled core and a pure-Python fallback.

The compiled extension is used when it was built and importable; set
``HAMH_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the choice.
"""

import os

from . import _fallback

if os.environ.get("HAMH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
else:
    try:
        from . import _ext as _impl
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND = "compiled" if _impl is not _fallback else "python"

gru_forward = _impl.gru_forward
gru_backward = _impl.gru_backward
gae = _impl.gae
sim_advance = _impl.sim_advance

__all__ = ["BACKEND", "gru_forward", "gru_backward", "gae", "sim_advance"]
