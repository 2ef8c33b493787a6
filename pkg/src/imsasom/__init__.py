"""Reconstruction of 2D PEC scatterers by subspace optimization inside a
multi-scaling zooming loop."""

from .errors import (ConfigError, DataFormatError, DegenerateNormalizationError,
                     DegenerateSubspaceError, EmptyRoIError, GeometryError, ImsaSomError,
                     SingularSystemError)
from .forward import ScatteringSetup, add_noise, incident_field, reference_setup, solve_forward
from .geometry import Domain, SegmentGrid, build_grid, map_solution
from .imsa import ImsaConfig, ImsaTrace, run, run_single_resolution
from .metrics import calibrate, compare, resample_truth
from .operators import decompose, deterministic_current, truncation_index
from .shapes import ShapeSpec
from .som import InversionProblem, MinimizerOptions, SomState, cost, gradient, minimize

__all__ = [
    "ConfigError", "DataFormatError", "DegenerateNormalizationError", "DegenerateSubspaceError",
    "EmptyRoIError", "GeometryError", "ImsaSomError", "SingularSystemError",
    "ScatteringSetup", "add_noise", "incident_field", "reference_setup", "solve_forward",
    "Domain", "SegmentGrid", "build_grid", "map_solution",
    "ImsaConfig", "ImsaTrace", "run", "run_single_resolution",
    "calibrate", "compare", "resample_truth",
    "decompose", "deterministic_current", "truncation_index",
    "ShapeSpec",
    "InversionProblem", "MinimizerOptions", "SomState", "cost", "gradient", "minimize",
]

__version__ = "0.1.0"
