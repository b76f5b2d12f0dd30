"""Random sampling and reconstruction in weighted reproducing kernel subspaces."""

__version__ = "0.1.0"

from .weights import WeightSpec, ModeratePair, moderate_pair, parse_weight  # noqa: E402
from .kernel import ShiftInvariantKernel, TabulatedKernel  # noqa: E402
from .subspace import LatticeBox, SubspaceBasis, build_basis  # noqa: E402
from .sampling import DensitySpec, draw_samples  # noqa: E402

__all__ = [
    "WeightSpec",
    "ModeratePair",
    "moderate_pair",
    "parse_weight",
    "ShiftInvariantKernel",
    "TabulatedKernel",
    "LatticeBox",
    "SubspaceBasis",
    "build_basis",
    "DensitySpec",
    "draw_samples",
]
