"""Generalized Baik-Rains distributions, finite-N last passage laws and their simulation."""

from .distributions import (
    FiniteNParams,
    GbrParams,
    ScalingMap,
    br_cdf_airy,
    br_cdf_classical,
    br_cdf_tau0,
    br_cdf_via_gbr,
    finite_n_cdf,
    gbr2_cdf,
    gbr_cdf,
    gbr_limit_cdf,
    gue_cdf,
    scale_from_limit,
    scale_to_limit,
)
from .errors import DomainError, InfeasibleContourError, NonConvergenceError
from .lpp_sim import LatticeConfig

__version__ = "0.1.0"
