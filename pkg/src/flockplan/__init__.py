"""Weekly LSTM surrogates and genetic search for broiler climate planning."""

from .domain import (
    FLOCK_DAYS,
    Bounds,
    DayOutcome,
    DayPlan,
    FlockSample,
    HouseGeometry,
    fcr_basic,
    fcr_normalized,
    living_birds,
    minmax_denorm,
    minmax_norm,
    normalize_by_area,
)
from .errors import FlockPlanError

__version__ = "0.1.0"

__all__ = [
    "FLOCK_DAYS",
    "Bounds",
    "DayOutcome",
    "DayPlan",
    "FlockSample",
    "HouseGeometry",
    "FlockPlanError",
    "fcr_basic",
    "fcr_normalized",
    "living_birds",
    "minmax_denorm",
    "minmax_norm",
    "normalize_by_area",
    "__version__",
]
