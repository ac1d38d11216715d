"""Approximate possibly discontinuous functions by ``argmin_y p(x, y)`` for a
polynomial ``p`` fitted with sum-of-squares constraints."""

from .datasets import SampleSet, make_target, normalize_range, sample, uniform_design, equidistant_design
from .estimate import in_sample_bounds, n_theta, out_of_sample_bound, sample_size_exact, sample_size_sufficient
from .exact import ArgminModel, PiecewiseSpec, model_of_algebraic, model_of_piecewise, model_of_polynomial
from .polys import Box, Interval, MVPoly, UniPoly
from .sosfit import FitConfig, FitError, FittedModel, ObjectiveMode, fit

__version__ = "0.1.0"

__all__ = [
    "ArgminModel", "Box", "FitConfig", "FitError", "FittedModel", "Interval", "MVPoly", "ObjectiveMode",
    "PiecewiseSpec", "SampleSet", "UniPoly", "equidistant_design", "fit", "in_sample_bounds", "make_target",
    "model_of_algebraic", "model_of_piecewise", "model_of_polynomial", "n_theta", "normalize_range",
    "out_of_sample_bound", "sample", "sample_size_exact", "sample_size_sufficient", "uniform_design",
]
