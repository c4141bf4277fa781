"""Numeric kernels with a compiled fast path.

The Cython extension ``_core`` is built at install time when a C compiler
is available; otherwise the pure-Python implementations in ``_fallback``
are used. Both backends expose the same four functions and produce
identical results (integer/index outputs are exact; float accumulation
order is matched so results agree bit-for-bit).

Set ``TEXTGROUND_PURE_PYTHON=1`` to force the fallback, e.g. for
benchmarking or debugging.
"""

import os

from . import _fallback

if os.environ.get("TEXTGROUND_PURE_PYTHON") == "1":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

region_areas = _impl.region_areas
merge_mean = _impl.merge_mean
col_score = _impl.col_score
two_level_select = _impl.two_level_select

__all__ = [
    "BACKEND",
    "region_areas",
    "merge_mean",
    "col_score",
    "two_level_select",
]
