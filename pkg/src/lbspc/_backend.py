"""Backend selection for the compiled hot kernels.

Set LBSPC_NUMBA=0 to force the pure numpy/scipy code paths (slower but
dependency-light and easier to debug). Anything else, or unset, uses the
numba-compiled kernels when numba imports cleanly.
"""

import os

_flag = os.environ.get("LBSPC_NUMBA", "1").strip().lower()

if _flag in ("0", "false", "no", "off"):
    NUMBA_ENABLED = False
else:
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
