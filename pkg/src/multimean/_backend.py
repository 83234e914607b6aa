"""Select the compiled extension when available, the pure-Python loops otherwise.

Set ``MULTIMEAN_PURE_PYTHON=1`` to force the fallback.
"""

import os

NAME = "python"

if os.environ.get("MULTIMEAN_PURE_PYTHON", "") not in ("", "0"):
    from multimean._accel_py import egd_loop, subsample_terms
else:
    try:
        from multimean._accel import egd_loop, subsample_terms

        NAME = "cython"
    except ImportError:
        from multimean._accel_py import egd_loop, subsample_terms

__all__ = ["NAME", "egd_loop", "subsample_terms"]
