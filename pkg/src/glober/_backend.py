"""Select the compiled kernels when available.

Set ``GLOBER_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

BACKEND = "python"

if os.environ.get("GLOBER_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels
        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as kernels

__all__ = ["BACKEND", "kernels"]
