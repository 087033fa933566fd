"""Kernel backend selection.

The compiled Cython core is preferred; the pure-numpy module is the
fallback when the extension is unavailable. Set DRONEQKD_BACKEND to
"python" or "compiled" to force a choice (the benchmark and the
backend-equivalence tests do this).
"""

import os

from droneqkd._kernels import _py

_requested = os.environ.get("DRONEQKD_BACKEND", "")

if _requested not in ("", "python", "compiled"):
    raise RuntimeError(f"DRONEQKD_BACKEND must be 'python' or 'compiled', got {_requested!r}")

if _requested == "python":
    _impl = _py
else:
    try:
        from droneqkd._kernels import _core as _impl
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _py

propagate_block = _impl.propagate_block
match_pattern = _impl.match_pattern


def backend_name() -> str:
    """Name of the active kernel backend ("compiled" or "python")."""
    return _impl.BACKEND
