"""Moment-based spectral estimators for mixtures of spherical Gaussians."""

__version__ = "0.1.0"

from .errors import (
    DegeneracyError,
    DimensionError,
    EtaCollisionError,
    IllConditionedTrialError,
    KurtosisDegeneracyError,
    ParameterError,
    RankError,
    SmogError,
)
from .estimator import (
    EstimateReport,
    estimate_spherical,
    estimate_spherical_exact,
    estimate_spherical_plugin,
    gamma_threshold,
    learn_gmm_common,
    match_and_score,
)
from .model import (
    MixtureModel,
    PopulationMoments,
    SampleSet,
    moment_matched_sampleset,
    population_moments,
    sample,
    validate_model,
)
