"""Kernel backend selection.

The compiled kernels are used when the extension was built; set
``RESILOOP_PURE_PYTHON=1`` to force the pure-Python fallback.
"""
import os

from . import _pykernels

BACKENDS = {"python": _pykernels}

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    BACKENDS["cython"] = _ckernels

if _ckernels is not None and os.environ.get("RESILOOP_PURE_PYTHON", "") in ("", "0"):
    backend = _ckernels
    BACKEND = "cython"
else:
    backend = _pykernels
    BACKEND = "python"

route_flows = backend.route_flows
flow_metrics = backend.flow_metrics
shortest_dist = backend.shortest_dist
queue_multiplier = backend.queue_multiplier
