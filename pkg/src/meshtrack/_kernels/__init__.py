"""Kernel selection: compiled extension when available, pure Python otherwise.

Set ``MESHTRACK_PURE=1`` to force the fallback (used by the benchmark to
compare both implementations on the same machine).
"""

import os

from . import fallback

if os.environ.get("MESHTRACK_PURE") == "1":
    _impl = fallback
    HAVE_COMPILED = False
else:
    try:
        from . import _graphcore as _impl

        HAVE_COMPILED = True
    except ImportError:
        _impl = fallback
        HAVE_COMPILED = False

dijkstra = _impl.dijkstra
pure_dijkstra = fallback.dijkstra

__all__ = ["dijkstra", "pure_dijkstra", "HAVE_COMPILED"]
