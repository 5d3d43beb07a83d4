"""Kendall-type concordance tests of association between a scalar response
and a functional predictor, for dense curves and for sparse, noisy
longitudinal observations."""

from .concordance import projections, spectrum, statistic_T, u_curve, u_curve_fast
from .domain import (
    DenseSample,
    FpcaModel,
    Grid,
    NumericalError,
    ProjectionSet,
    SparseSample,
    Spectrum,
    Subject,
    TestReport,
    ValidationError,
    validate_dense,
    validate_sparse,
)
from .nulldist import MixtureSampler, critical_value, p_value, sample_mixture
from .pace import SmootherConfig, fit
from .pipeline import dense_test, sparse_test
from .simgen import ScenarioConfig, power_study

__version__ = "0.1.0"

__all__ = [
    "DenseSample", "FpcaModel", "Grid", "MixtureSampler", "NumericalError", "ProjectionSet",
    "ScenarioConfig", "SmootherConfig", "SparseSample", "Spectrum", "Subject", "TestReport",
    "ValidationError", "critical_value", "dense_test", "fit", "p_value", "power_study",
    "projections", "sample_mixture", "sparse_test", "spectrum", "statistic_T", "u_curve",
    "u_curve_fast", "validate_dense", "validate_sparse",
]
