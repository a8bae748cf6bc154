"""Online team formation: hire, outsource or fire workers as skill-set tasks arrive."""

from .model import (
    CoverageError,
    Marketplace,
    MarketplaceError,
    Policy,
    Team,
    Worker,
    cover_check,
    make_marketplace,
    mask_of,
    validate_marketplace,
)
from .oracle import OracleSolution, competitive_ratio, offline_opt
from .policies import POLICIES, make_policy
from .primal_dual import LumpSum, TFOPolicy, dual_lower_bound
from .setcover import exact_cover, greedy_cover

__all__ = [
    "CoverageError",
    "LumpSum",
    "Marketplace",
    "MarketplaceError",
    "OracleSolution",
    "POLICIES",
    "Policy",
    "TFOPolicy",
    "Team",
    "Worker",
    "competitive_ratio",
    "cover_check",
    "dual_lower_bound",
    "exact_cover",
    "greedy_cover",
    "make_marketplace",
    "make_policy",
    "mask_of",
    "offline_opt",
    "validate_marketplace",
]

__version__ = "0.1.0"
