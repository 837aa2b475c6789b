"""Tree-kernel backend selection.

Prefers the compiled Cython kernel; falls back to the pure-Python reference
implementation when the extension is unavailable. Both produce bit-identical
trees (cross-checked in the test suite); the compiled one is just fast.
"""

from . import _pytree

try:  # pragma: no cover - exercised implicitly by which backend runs
    from . import _ctree as _impl

    HAS_COMPILED = True
except ImportError:  # pragma: no cover
    _impl = _pytree
    HAS_COMPILED = False

BACKEND = _impl.BACKEND_NAME
NO_SPLIT_RSS_EPS = _impl.NO_SPLIT_RSS_EPS
SPLIT_TIE_RTOL = _impl.SPLIT_TIE_RTOL
LEAF = _impl.LEAF
MAX_CATEGORIES = _impl.MAX_CATEGORIES

grow_tree = _impl.grow_tree
best_split = _impl.best_split
predict_rows = _impl.predict_rows


def available_backends() -> dict:
    """Name -> module for every importable kernel backend."""
    backends = {"python": _pytree}
    if HAS_COMPILED:
        backends["cython"] = _impl
    return backends
