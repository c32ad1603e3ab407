"""Average treatment effect estimation with Hermite-sieve single-index models."""

from .ate import (
    METHODS,
    AteEstimate,
    estimate,
    estimate_proposed,
    estimate_ps_regression,
    estimate_ps_residual,
    residual_on_residual,
    theorem3_variance,
)
from .data import DataError, Dataset
from .hermite import SieveBasis, basis_matrix, eval_basis, eval_basis_derivative, orthonormality_defect
from .io import ColumnMapping, ingest
from .linear import EstimationError
from .sieve import FitOptions, SieveFit, SieveFitError, fit, fit_nuisance, predict, select_k
from .simlab import ScenarioSpec, SimulationSummary, generate, run_monte_carlo, summarize_table

__version__ = "0.1.0"
