"""Hierarchical portfolio engine: clustering, ledger, allocator, agents, baselines and metrics.

Hot loops have numba kernels with pure-numpy fallbacks; set
``HIERFOLIO_DISABLE_NUMBA=1`` to force the numpy paths.
"""
__version__ = "0.1.0"
