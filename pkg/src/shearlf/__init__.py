"""Densely-sampled light field reconstruction by shearlet-domain sparse regularisation."""

from .errors import ConsistencyError, DataError, DisparityBudgetError, InvalidArgument, NumericalError
from .lightfield import DisparityConfig, Epi, LightField3D, dense_view_count, evaluate, psnr
from .shearlet import ShearletSystem, analysis, build_system, scale_count, shearlet_count, synthesis
from .solver import SolverConfig, st_reconstruct

__version__ = "0.1.0"

__all__ = [
    "ConsistencyError",
    "DataError",
    "DisparityBudgetError",
    "InvalidArgument",
    "NumericalError",
    "DisparityConfig",
    "Epi",
    "LightField3D",
    "dense_view_count",
    "evaluate",
    "psnr",
    "ShearletSystem",
    "analysis",
    "build_system",
    "scale_count",
    "shearlet_count",
    "synthesis",
    "SolverConfig",
    "st_reconstruct",
]
