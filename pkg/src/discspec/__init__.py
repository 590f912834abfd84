"""Discrete-spectrum criteria for birth-death operators and one-dimensional diffusions."""

from .continuous import (
    DiffusionModel, PicardSolution, criteria_halfline, criteria_wholeline, h_transform,
    harmonic_residual, peano_baker_terms, picard_solve,
)
from .criteria import CriterionReport, Verdict, classify, product_max, product_min
from .duality import dual_pair, duality_identities_check
from .errors import ConsistencyError, ConvergenceError, DiscSpecError, ModelError
from .harmonic import HarmonicSeq, harmonic
from .logscalar import LogScalar
from .model import DiscreteModel, MeasureCache, Rate, from_b_and_mu, load_model_file, validate_model
from .oracle import fd_discretize, low_eigs, truncate_symmetric
from .single_birth import LowerTriModel, g_table, poisson_solve

__all__ = [
    "ConsistencyError", "ConvergenceError", "CriterionReport", "DiffusionModel", "DiscSpecError",
    "DiscreteModel", "HarmonicSeq", "LogScalar", "LowerTriModel", "MeasureCache", "ModelError",
    "PicardSolution", "Rate", "Verdict", "classify", "criteria_halfline", "criteria_wholeline",
    "dual_pair", "duality_identities_check", "fd_discretize", "from_b_and_mu", "g_table",
    "h_transform", "harmonic", "harmonic_residual", "load_model_file", "low_eigs",
    "peano_baker_terms", "picard_solve", "poisson_solve", "product_max", "product_min",
    "truncate_symmetric", "validate_model",
]
