"""Probability distributions concentrated near real algebraic varieties.

Build a system, wrap it in a density, sample, and optionally project::

    from varietydist import catalog, isotropic, RejectionConfig, sample_rejection

    entry = catalog("circle")
    model = isotropic(entry.system, sigma=0.1)
    batch = sample_rejection(model, RejectionConfig(entry.box, 10_000, seed=1))
"""

from .batch import SampleBatch
from .catalog import CatalogEntry, catalog, kuramoto_system, log_likelihood_multinomial
from .density import (
    HVN,
    MVN,
    VN,
    Beta,
    DensityModel,
    Exponential,
    Induced,
    RankDeficient,
    Uniform,
    band_statistic,
    grad_log_density,
    isotropic,
    log_density,
    residual_normalized,
    residual_raw,
)
from .endgame import HomotopyTracker, ProjectionResult, TrackControls, build_tracker, project_batch, project_points, track
from .hmc import AllChainsFailed, HmcConfig, run_chains
from .polynomial import ParseError, Polynomial, PolySystem, VarContext, parse_polynomial
from .rejection import RejectionConfig, sample_rejection
from .semialgebraic import LiftedSystem, lift_box, lift_with_slacks, marginalize, square_substitute

__all__ = [
    "AllChainsFailed",
    "Beta",
    "CatalogEntry",
    "DensityModel",
    "Exponential",
    "HVN",
    "HmcConfig",
    "HomotopyTracker",
    "Induced",
    "LiftedSystem",
    "MVN",
    "ParseError",
    "PolySystem",
    "Polynomial",
    "ProjectionResult",
    "RankDeficient",
    "RejectionConfig",
    "SampleBatch",
    "TrackControls",
    "Uniform",
    "VN",
    "VarContext",
    "band_statistic",
    "build_tracker",
    "catalog",
    "grad_log_density",
    "isotropic",
    "kuramoto_system",
    "lift_box",
    "lift_with_slacks",
    "log_density",
    "log_likelihood_multinomial",
    "marginalize",
    "parse_polynomial",
    "project_batch",
    "project_points",
    "residual_normalized",
    "residual_raw",
    "run_chains",
    "sample_rejection",
    "square_substitute",
    "track",
]
