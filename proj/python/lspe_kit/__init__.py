"""Linear spectral estimators for phase retrieval."""

from ._core import (
    CSV_HEADER,
    ConfigError,
    MeasurementSystem,
    NumericalError,
    ParseError,
    analytic_smse,
    empirical_errors,
    estimate,
    forward_measure,
    moment_oracles,
    preprocess,
    prior_constants,
    random_system,
    run,
    sample_signal,
    spectral_matrix,
)

__all__ = [
    "CSV_HEADER",
    "ConfigError",
    "MeasurementSystem",
    "NumericalError",
    "ParseError",
    "analytic_smse",
    "empirical_errors",
    "estimate",
    "forward_measure",
    "moment_oracles",
    "preprocess",
    "prior_constants",
    "random_system",
    "run",
    "sample_signal",
    "spectral_matrix",
]
