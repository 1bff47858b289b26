"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``ATOMPREP_PURE_PYTHON`` is set, the pure-Python
implementations are used. ``BACKEND`` names the active choice.
"""
from __future__ import annotations

import os

from . import _kernels_py as python_backend

compiled_backend = None
if not os.environ.get("ATOMPREP_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

connected_graph_sum = _active.connected_graph_sum
connected_sum_recursive = _active.connected_sum_recursive
count_labeled_trees = _active.count_labeled_trees
kp_neighbor_sums = _active.kp_neighbor_sums

__all__ = [
    "BACKEND",
    "compiled_backend",
    "python_backend",
    "connected_graph_sum",
    "connected_sum_recursive",
    "count_labeled_trees",
    "kp_neighbor_sums",
]
