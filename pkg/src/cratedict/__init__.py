"""Space-efficient dynamic dictionary, filter, and retrieval structures.

The core structure spreads elements over fixed-size quotienting bins with a
small shared backing store, tracking every simulated memory access through
an attached meter.  A dense layout stores full remainders inline; a sparse
layout keeps remainders in per-bin motels and locates them through minimal
prefix-free fragments held in variable-length stores.
"""

from .errors import (
    CapacityError,
    ComponentOverflow,
    ConfigError,
    ConstructionFailure,
)
from .hashing import Params, derive_params

__all__ = [
    "AccessMeter",
    "CrateDictDense",
    "CrateDictSparse",
    "CrateFilter",
    "RetrievalStructure",
    "CapacityError",
    "ComponentOverflow",
    "ConfigError",
    "ConstructionFailure",
    "Params",
    "derive_params",
    "make_dict",
]

_LAZY = {
    "AccessMeter": "core_bits",
    "CrateDictDense": "crate_dense",
    "CrateDictSparse": "crate_sparse",
    "CrateFilter": "filter",
    "RetrievalStructure": "retrieval",
}


def __getattr__(name):
    if name in _LAZY:
        import importlib

        module = importlib.import_module(f".{_LAZY[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def make_dict(n, rho=None, w_eff=64, *, universe=None, seed=None,
              permute=True, overrides=None, meter=None):
    """Construct the dense or sparse dictionary appropriate for the geometry."""
    import os

    from .crate_dense import CrateDictDense
    from .crate_sparse import CrateDictSparse

    params = derive_params(n, rho, w_eff, universe=universe, overrides=overrides)
    cls = CrateDictDense if params.mode == "dense" else CrateDictSparse
    if seed is None:
        seed = os.urandom(32)
    return cls(params, seed, permute=permute, meter=meter,
               derive_inputs={"overrides": overrides})
