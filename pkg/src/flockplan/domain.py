"""Core domain values and formulas for broiler climate management.

Unit conventions are fixed package-wide: temperatures in degrees Celsius,
relative humidity in percent, bird weight in grams, feed in kilograms.
The feed conversion rate (FCR) is dimensionless; the 1000 factor that turns
gram weights into kilograms is folded into both FCR operations so the rate
reads as kg of feed per kg of live weight.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateBound,
    DivisionDomain,
    NegativeFlock,
    OutOfRange,
    ShapeError,
)

log = logging.getLogger(__name__)

FLOCK_DAYS = 40


@dataclass(frozen=True)
class DayPlan:
    """Climate setpoints handed to one house for one production day."""

    day: int
    t_min: float
    t_avg: float
    t_max: float
    h_min: float
    h_avg: float
    h_max: float

    def __post_init__(self):
        if not 1 <= self.day <= FLOCK_DAYS:
            raise ValueError(f"day {self.day} outside [1, {FLOCK_DAYS}]")
        if not self.t_min <= self.t_avg <= self.t_max:
            raise ValueError(
                f"day {self.day}: temperatures not ordered "
                f"({self.t_min}, {self.t_avg}, {self.t_max})"
            )
        if not self.h_min <= self.h_avg <= self.h_max:
            raise ValueError(
                f"day {self.day}: humidities not ordered "
                f"({self.h_min}, {self.h_avg}, {self.h_max})"
            )
        if self.h_min < 0.0 or self.h_max > 100.0:
            raise ValueError(f"day {self.day}: humidity outside [0, 100]")

    def as_vector(self) -> np.ndarray:
        """[day, Tmin, Tavg, Tmax, Hmin, Havg, Hmax] as float64."""
        return np.array(
            [self.day, self.t_min, self.t_avg, self.t_max,
             self.h_min, self.h_avg, self.h_max],
            dtype=float,
        )


@dataclass(frozen=True)
class DayOutcome:
    """Observed (or simulated) flock response for one day.

    ``mdw`` mean daily weight [g], ``dfcpb`` cumulative feed per bird
    [kg/bird], ``nlbpa`` living birds per floor area [bird/m^2]; the raw
    counterparts ``dm`` (deaths that day), ``nlb`` (living birds), ``dfc``
    (cumulative feed, kg) and ``dmpa`` (deaths per area) are kept alongside.
    """

    mdw: float
    dfcpb: float
    nlbpa: float
    dm: int
    nlb: int
    dfc: float
    dmpa: float

    def __post_init__(self):
        if self.mdw <= 0:
            raise ValueError("mean daily weight must be positive")
        if self.dfcpb < 0 or self.nlbpa < 0 or self.dfc < 0:
            raise ValueError("feed and density values must be non-negative")
        if self.dm < 0 or self.nlb < 0:
            raise ValueError("bird counts must be non-negative")

    def as_vector(self) -> np.ndarray:
        """[MdW, dFCpB, NlBpA] as float64."""
        return np.array([self.mdw, self.dfcpb, self.nlbpa], dtype=float)


@dataclass(frozen=True)
class HouseGeometry:
    length_m: float
    width_m: float
    capacity: int

    def __post_init__(self):
        if self.length_m <= 0 or self.width_m <= 0:
            raise ValueError("house dimensions must be positive")
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")

    @property
    def area_m2(self) -> float:
        return self.length_m * self.width_m


@dataclass(frozen=True)
class FlockSample:
    """One complete 40-day flock: house, applied plans and daily outcomes."""

    house: HouseGeometry
    initial_birds: int
    plans: tuple[DayPlan, ...]
    outcomes: tuple[DayOutcome, ...]
    initial_conditions: tuple[float, float, float]  # (mdw0 g, dfcpb0, nlbpa0)
    flock_id: int = 0

    def __post_init__(self):
        if len(self.plans) != FLOCK_DAYS or len(self.outcomes) != FLOCK_DAYS:
            raise ShapeError(
                f"flock {self.flock_id}: expected {FLOCK_DAYS} plans and "
                f"outcomes, got {len(self.plans)}/{len(self.outcomes)}"
            )
        for t, plan in enumerate(self.plans, start=1):
            if plan.day != t:
                raise ShapeError(
                    f"flock {self.flock_id}: plan days not contiguous at {t}"
                )
        expected = self.initial_birds
        prev_dfc = 0.0
        for t, out in enumerate(self.outcomes, start=1):
            expected -= out.dm
            if expected < 0:
                raise NegativeFlock(
                    f"flock {self.flock_id}: mortality overdraws flock on day {t}"
                )
            if out.nlb != expected:
                raise ShapeError(
                    f"flock {self.flock_id}: day {t} living-bird count {out.nlb} "
                    f"does not match initial {self.initial_birds} minus "
                    f"accumulated mortality ({expected})"
                )
            if out.dfc < prev_dfc:
                raise ShapeError(
                    f"flock {self.flock_id}: cumulative feed decreases on day {t}"
                )
            prev_dfc = out.dfc

    def plan_matrix(self) -> np.ndarray:
        """(40, 7) matrix of day-plan rows."""
        return np.stack([p.as_vector() for p in self.plans])

    def outcome_matrix(self) -> np.ndarray:
        """(40, 3) matrix of [MdW, dFCpB, NlBpA] rows."""
        return np.stack([o.as_vector() for o in self.outcomes])


@dataclass(frozen=True)
class Bounds:
    """Per-position lower/upper bounds used for min-max scaling."""

    mini: np.ndarray
    maxi: np.ndarray

    def __post_init__(self):
        mini = np.asarray(self.mini, dtype=float)
        maxi = np.asarray(self.maxi, dtype=float)
        object.__setattr__(self, "mini", mini)
        object.__setattr__(self, "maxi", maxi)
        if mini.shape != maxi.shape:
            raise ShapeError("bound vectors differ in length")
        if np.any(mini > maxi):
            k = int(np.argmax(mini > maxi))
            raise ValueError(f"lower bound exceeds upper bound at position {k}")

    def __len__(self) -> int:
        return self.mini.size

    @property
    def span(self) -> np.ndarray:
        return self.maxi - self.mini


def living_birds(initial_birds: int, mortality, p: int) -> int:
    """Living birds after ``p`` days, given the daily mortality record."""
    if p > len(mortality):
        raise ValueError(f"period {p} exceeds mortality record ({len(mortality)})")
    if any(m < 0 for m in mortality):
        raise ValueError("mortality entries must be non-negative")
    remaining = initial_birds - sum(mortality[:p])
    if remaining < 0:
        raise NegativeFlock(
            f"accumulated mortality {sum(mortality[:p])} exceeds "
            f"initial flock of {initial_birds}"
        )
    return remaining


def normalize_by_area(
    dm: float, nlb: float, dfc: float, geometry: HouseGeometry
) -> tuple[float, float, float]:
    """Per-area mortality (dMpA), per-area density (NlBpA) and per-bird
    feed consumption (dFCpB) from the raw house totals."""
    area = geometry.area_m2
    if area == 0:
        raise DivisionDomain("house area is zero")
    if nlb == 0:
        raise DivisionDomain("cannot compute feed per bird with zero birds")
    return dm / area, nlb / area, dfc / nlb


def fcr_basic(dfc_cum: float, nlb: float, mdw: float) -> float:
    """Feed conversion rate from house totals: 1000 * dFC / (NlB * MdW)."""
    if nlb == 0 or mdw == 0:
        raise DivisionDomain("FCR undefined for zero birds or zero weight")
    return 1000.0 * dfc_cum / (nlb * mdw)


def fcr_normalized(dfcpb: float, nlbpa: float, mdw: float) -> float:
    """Feed conversion rate from the per-area normalized outputs.

    Written exactly as the density-weighted quotient; the density factor
    cancels algebraically, leaving 1000 * dfcpb / mdw.
    """
    if nlbpa == 0 or mdw == 0:
        raise DivisionDomain("FCR undefined for zero density or zero weight")
    return 1000.0 * (dfcpb / (nlbpa * mdw)) * nlbpa


def _as_bound_arrays(v, maxi, mini):
    v = np.asarray(v, dtype=float)
    maxi = np.asarray(maxi, dtype=float)
    mini = np.asarray(mini, dtype=float)
    if not (v.shape[-1] == maxi.shape[-1] == mini.shape[-1]):
        raise ShapeError(
            f"vector/bound lengths differ: {v.shape[-1]}, "
            f"{maxi.shape[-1]}, {mini.shape[-1]}"
        )
    return v, maxi, mini


def minmax_norm(v, maxi, mini, mode: str = "strict") -> np.ndarray:
    """Scale ``v`` into [0, 1] per position using the given bounds.

    ``mode="strict"`` raises :class:`OutOfRange` when a value lies outside
    its bounds (training data must be clean); ``mode="clamp"`` clips the
    value and logs a warning (live telemetry may briefly exceed historical
    extremes).
    """
    v, maxi, mini = _as_bound_arrays(v, maxi, mini)
    span = maxi - mini
    if np.any(span == 0):
        k = int(np.argmax(span == 0))
        raise DegenerateBound(f"zero-width bound at position {k}")
    below, above = v < mini, v > maxi
    if np.any(below | above):
        if mode == "strict":
            k = int(np.argmax((below | above).reshape(-1)))
            raise OutOfRange(f"value outside bounds at flat position {k}")
        if mode != "clamp":
            raise ValueError(f"unknown normalization mode {mode!r}")
        n_bad = int(np.count_nonzero(below | above))
        log.warning("clamping %d value(s) to normalization bounds", n_bad)
        v = np.clip(v, mini, maxi)
    return (v - mini) / span


def minmax_denorm(v_norm, maxi, mini) -> np.ndarray:
    """Inverse of :func:`minmax_norm`; tolerates values slightly outside [0, 1]."""
    v_norm, maxi, mini = _as_bound_arrays(v_norm, maxi, mini)
    span = maxi - mini
    if np.any(span == 0):
        k = int(np.argmax(span == 0))
        raise DegenerateBound(f"zero-width bound at position {k}")
    return v_norm * span + mini
