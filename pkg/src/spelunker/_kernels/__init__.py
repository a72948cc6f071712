"""Kernel backend selection.

Prefers the compiled extension; falls back to the numpy implementation when
it is absent. ``SPELUNKER_KERNEL=python|native`` forces a choice (``native``
raises if the extension was not built).
"""

from __future__ import annotations

import os

from . import _py

_forced = os.environ.get("SPELUNKER_KERNEL", "").strip().lower()

if _forced == "python":
    _impl = _py
    BACKEND = "python"
elif _forced == "native":
    from . import _native as _impl  # type: ignore[no-redef]
    BACKEND = "native"
elif _forced:
    raise ValueError(f"SPELUNKER_KERNEL must be 'python' or 'native', got {_forced!r}")
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
        BACKEND = "native"
    except ImportError:
        _impl = _py
        BACKEND = "python"

ref_sq_distances = _impl.ref_sq_distances
query_sq_distances = _impl.query_sq_distances
tree_knn = getattr(_impl, "tree_knn", None)


def backends() -> dict[str, object]:
    """All importable kernel modules, keyed by backend name."""
    found: dict[str, object] = {"python": _py}
    try:
        from . import _native
        found["native"] = _native
    except ImportError:
        pass
    return found
