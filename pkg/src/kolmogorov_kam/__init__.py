"""Kolmogorov's constructive KAM iteration on truncated Fourier-Taylor series."""

__version__ = "0.1.0"

from .diophantine import FrequencyVector, certify, worst_resonance
from .errors import (ConfigError, ContractionError, DomainError, KAMError, ResonanceError,
                     StepSizeError, TwistError)
from .fourier_taylor import AnalyticityDomain, FourierTaylorSeries
from .iteration import ComposedMap, IterationSchedule, kappa_threshold, run
from .kolmogorov_step import KolmogorovForm, TwistData, build_map, pullback, solve_generator

__all__ = [
    "AnalyticityDomain", "ComposedMap", "ConfigError", "ContractionError", "DomainError",
    "FourierTaylorSeries", "FrequencyVector", "IterationSchedule", "KAMError", "KolmogorovForm",
    "ResonanceError", "StepSizeError", "TwistData", "TwistError", "build_map", "certify",
    "kappa_threshold", "pullback", "run", "solve_generator", "worst_resonance",
]
