"""Synthetic flock corpus: generation, persistence and week slicing.

The generator is a small mechanistic model of a broiler house. Weight follows
a logistic curve whose daily gain is damped by squared deviations from a
comfort climate; feed consumption is gain times an age-dependent conversion
ratio, inflated by the same deviations; mortality has a baseline, an
early-cull component and a heat component. Deviations enter only as squared
distances from the comfort plan, so the comfort plan is the unique FCR
optimum of the generator and any other plan is strictly worse. That property
is what lets the generator serve as ground truth when judging the search
pipeline built on top of it.

All emitted quantities are quantized to the resolutions the wire protocol
carries (0.1 degC / 0.1 %RH setpoints, whole grams, whole kilograms, whole
birds), so a value that travels through the protocol comes back bit-equal.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .domain import (
    FLOCK_DAYS,
    Bounds,
    DayOutcome,
    DayPlan,
    FlockSample,
    HouseGeometry,
    fcr_basic,
)
from .errors import (
    ConfigDomain,
    InsufficientData,
    InsufficientHistory,
    ParseError,
    SchemaVersionError,
    ShapeError,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# inclusive 1-based day spans of the six production weeks
WEEK_SPANS = ((1, 7), (8, 14), (15, 21), (22, 28), (29, 35), (36, 40))
N_WEEKS = len(WEEK_SPANS)

CSV_COLUMNS = (
    "flock_id", "day", "t_min", "t_avg", "t_max",
    "h_min", "h_avg", "h_max", "mdw_g", "dfc_kg", "dm_birds", "nlb",
)


def week_span(week: int) -> tuple[int, int]:
    if not 1 <= week <= N_WEEKS:
        raise ValueError(f"week {week} outside [1, {N_WEEKS}]")
    return WEEK_SPANS[week - 1]


def week_size(week: int) -> int:
    start, end = week_span(week)
    return end - start + 1


def ve_length(week: int) -> int:
    """Flat week-input width: 7 per day plus the 3 previous-output slots."""
    return 7 * week_size(week) + 3


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of the synthetic house model and of corpus sampling."""

    seed: int = 1234
    n_flocks: int = 12
    houses: tuple[HouseGeometry, ...] = (
        HouseGeometry(60.0, 40.0, 34800),
        HouseGeometry(60.0, 30.0, 26500),
    )

    # chick placement
    arrival_weight_g: float = 42.01
    arrival_weight_jitter_g: float = 0.8
    stocking_jitter: float = 0.05  # max fraction of capacity left unfilled

    # logistic growth
    mature_weight_g: float = 3800.0
    growth_rate: float = 0.138
    inflection_day: float = 32.5

    # comfort climate, one setpoint per week, held constant within the week
    comfort_t: tuple[float, ...] = (31.415, 28.13, 26.615, 25.435, 24.21, 24.175)
    comfort_h: tuple[float, ...] = (54.82, 65.38, 67.35, 73.815, 77.205, 77.395)
    comfort_t_spread: float = 2.0
    comfort_h_spread: float = 5.0

    # stress response to squared climate deviation
    growth_stress_t: float = 0.010
    growth_stress_h: float = 0.0004
    feed_stress_t: float = 0.003
    feed_stress_h: float = 0.0001

    # instantaneous conversion ratio: g feed per g gain at age t
    cfr_intercept: float = 0.872
    cfr_slope: float = 0.0252

    # mortality rates per bird per day
    mort_base: float = 0.00045
    mort_early: float = 0.0035
    mort_early_decay: float = 2.6
    mort_heat: float = 0.00018
    mort_heat_margin: float = 1.5
    mort_heat_from_day: int = 25

    # multiplicative day-to-day noise
    growth_noise: float = 0.015
    feed_noise: float = 0.010

    # corpus plan sampling around the comfort curve; farms tweak their
    # standard profile by a degree or two, not more
    plan_t_offset: float = 1.5
    plan_h_offset: float = 4.0
    plan_day_jitter: float = 0.2
    plan_t_spread: tuple[float, float] = (1.6, 2.4)
    plan_h_spread: tuple[float, float] = (4.0, 6.0)

    def __post_init__(self):
        if len(self.comfort_t) != N_WEEKS or len(self.comfort_h) != N_WEEKS:
            raise ConfigDomain("comfort curves need one midpoint per week")
        if self.mature_weight_g <= 0 or self.growth_rate <= 0:
            raise ConfigDomain("growth parameters must be positive")
        if min(self.growth_noise, self.feed_noise) < 0:
            raise ConfigDomain("noise scales must be non-negative")
        if self.n_flocks < 1 or not self.houses:
            raise ConfigDomain("need at least one flock and one house")

    def to_json(self) -> str:
        doc = asdict(self)
        doc["houses"] = [asdict(h) for h in self.houses]
        doc["schema_version"] = SCHEMA_VERSION
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GeneratorConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"config is not valid JSON: {exc}") from None
        version = doc.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(
                f"config schema_version {version!r}, expected {SCHEMA_VERSION}"
            )
        doc["houses"] = tuple(HouseGeometry(**h) for h in doc.get("houses", []))
        for key in ("comfort_t", "comfort_h", "plan_t_spread", "plan_h_spread"):
            if key in doc:
                doc[key] = tuple(doc[key])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ParseError(f"bad config field: {exc}") from None


def _week_of_day(day: float) -> int:
    day = int(day)
    for w, (a, b) in enumerate(WEEK_SPANS, start=1):
        if a <= day <= b:
            return w
    raise ValueError(f"day {day} outside [1, {FLOCK_DAYS}]")


def comfort_temperature(cfg: GeneratorConfig, day: float) -> float:
    # setpoints step once per week, as farm schedules do
    return cfg.comfort_t[_week_of_day(day) - 1]


def comfort_humidity(cfg: GeneratorConfig, day: float) -> float:
    return cfg.comfort_h[_week_of_day(day) - 1]


def comfort_plan(cfg: GeneratorConfig, day: int) -> DayPlan:
    """Setpoints at the comfort optimum, quantized to wire resolution."""
    tc = comfort_temperature(cfg, day)
    hc = comfort_humidity(cfg, day)
    return DayPlan(
        day=day,
        t_min=round(tc - cfg.comfort_t_spread, 1),
        t_avg=round(tc, 1),
        t_max=round(tc + cfg.comfort_t_spread, 1),
        h_min=round(hc - cfg.comfort_h_spread, 1),
        h_avg=round(hc, 1),
        h_max=round(hc + cfg.comfort_h_spread, 1),
    )


def comfort_plans(cfg: GeneratorConfig) -> tuple[DayPlan, ...]:
    return tuple(comfort_plan(cfg, d) for d in range(1, FLOCK_DAYS + 1))


def _logistic_weight(cfg: GeneratorConfig, t: float) -> float:
    z = -cfg.growth_rate * (t - cfg.inflection_day)
    return cfg.mature_weight_g / (1.0 + np.exp(z))


def stress_terms(cfg: GeneratorConfig, plan: DayPlan) -> tuple[float, float]:
    """Squared temperature and humidity deviations from comfort.

    The band edges contribute at quarter weight so the average setpoint
    dominates; every term is minimized exactly at the comfort plan.
    """
    tc = comfort_temperature(cfg, plan.day)
    hc = comfort_humidity(cfg, plan.day)
    st, sh = cfg.comfort_t_spread, cfg.comfort_h_spread
    dt2 = (plan.t_avg - tc) ** 2 + 0.25 * (
        (plan.t_min - (tc - st)) ** 2 + (plan.t_max - (tc + st)) ** 2
    )
    dh2 = (plan.h_avg - hc) ** 2 + 0.25 * (
        (plan.h_min - (hc - sh)) ** 2 + (plan.h_max - (hc + sh)) ** 2
    )
    return dt2, dh2


@dataclass(frozen=True)
class FlockState:
    """Exact (unquantized) running state of one flock between days."""

    day: int
    mdw_g: float
    nlb: int
    dfc_kg: float
    death_carry: float = 0.0


def initial_state(initial_birds: int, arrival_weight_g: float) -> FlockState:
    return FlockState(day=0, mdw_g=float(round(arrival_weight_g)),
                      nlb=initial_birds, dfc_kg=0.0)


def step_flock_day(
    cfg: GeneratorConfig,
    state: FlockState,
    plan: DayPlan,
    house: HouseGeometry,
    rng: np.random.Generator | None = None,
) -> tuple[FlockState, DayOutcome]:
    """Advance one day. ``rng=None`` runs the expected-value (noise-free) model.

    The emitted outcome is quantized (whole grams, whole kg) while the
    returned state keeps exact values, so rounding never feeds back into
    the dynamics.
    """
    day = state.day + 1
    if plan.day != day:
        raise ValueError(f"plan is for day {plan.day}, state expects day {day}")
    if day > FLOCK_DAYS:
        raise ValueError(f"flock already complete at day {state.day}")

    dt2, dh2 = stress_terms(cfg, plan)

    gain = _logistic_weight(cfg, day) - _logistic_weight(cfg, day - 1)
    gain *= np.exp(-(cfg.growth_stress_t * dt2 + cfg.growth_stress_h * dh2))
    feed_factor = 1.0 + cfg.feed_stress_t * dt2 + cfg.feed_stress_h * dh2
    if rng is not None:
        gain *= 1.0 + cfg.growth_noise * rng.standard_normal()
        feed_factor *= 1.0 + cfg.feed_noise * rng.standard_normal()
    gain = max(gain, 0.0)

    cfr_inst = cfg.cfr_intercept + cfg.cfr_slope * day
    feed_g_per_bird = cfr_inst * gain * feed_factor

    rate = cfg.mort_base + cfg.mort_early * np.exp(-day / cfg.mort_early_decay)
    if day >= cfg.mort_heat_from_day:
        comfort_max = comfort_temperature(cfg, day) + cfg.comfort_t_spread
        excess = plan.t_max - (comfort_max + cfg.mort_heat_margin)
        if excess > 0:
            rate += cfg.mort_heat * excess**2
    rate = min(rate, 1.0)
    carry = state.death_carry
    if rng is not None:
        dm = int(rng.binomial(state.nlb, rate))
    else:
        carry += state.nlb * rate
        dm = int(carry)
        carry -= dm
    dm = min(dm, state.nlb)
    nlb = state.nlb - dm

    mdw_exact = state.mdw_g + gain
    dfc_exact = state.dfc_kg + feed_g_per_bird * nlb / 1000.0

    new_state = FlockState(day=day, mdw_g=mdw_exact, nlb=nlb,
                           dfc_kg=dfc_exact, death_carry=carry)
    mdw_q = float(round(mdw_exact))
    dfc_q = float(round(dfc_exact))
    area = house.area_m2
    outcome = DayOutcome(
        mdw=mdw_q,
        dfcpb=dfc_q / nlb if nlb else 0.0,
        nlbpa=nlb / area,
        dm=dm,
        nlb=nlb,
        dfc=dfc_q,
        dmpa=dm / area,
    )
    return new_state, outcome


def _day_rng(seed: int, flock_key: int, day: int) -> np.random.Generator:
    # one stream per (flock, day): stepping a house day by day reproduces
    # exactly what batch generation produced
    return np.random.default_rng(np.random.SeedSequence([seed, flock_key, day]))


def sample_plan_set(
    cfg: GeneratorConfig,
    rng: np.random.Generator,
    offset_rng: np.random.Generator | None = None,
    offset_sign: float = 1.0,
) -> tuple[DayPlan, ...]:
    """One random 40-day plan: weekly offsets plus daily jitter around comfort.

    ``offset_rng``/``offset_sign`` let two flocks share mirrored weekly
    offsets, which keeps the corpus climate centered on the comfort curve.
    """
    t_off = (offset_rng or rng).uniform(-cfg.plan_t_offset, cfg.plan_t_offset, N_WEEKS)
    h_off = (offset_rng or rng).uniform(-cfg.plan_h_offset, cfg.plan_h_offset, N_WEEKS)
    t_off, h_off = offset_sign * t_off, offset_sign * h_off
    t_spread = rng.uniform(*cfg.plan_t_spread)
    h_spread = rng.uniform(*cfg.plan_h_spread)
    plans = []
    for day in range(1, FLOCK_DAYS + 1):
        week = next(w for w, (a, b) in enumerate(WEEK_SPANS, start=1) if a <= day <= b)
        jt = rng.uniform(-cfg.plan_day_jitter, cfg.plan_day_jitter)
        jh = rng.uniform(-cfg.plan_day_jitter, cfg.plan_day_jitter)
        t_avg = comfort_temperature(cfg, day) + t_off[week - 1] + jt
        h_avg = comfort_humidity(cfg, day) + h_off[week - 1] + jh
        h_avg = float(np.clip(h_avg, h_spread, 100.0 - h_spread))
        plans.append(DayPlan(
            day=day,
            t_min=round(t_avg - t_spread, 1),
            t_avg=round(t_avg, 1),
            t_max=round(t_avg + t_spread, 1),
            h_min=round(h_avg - h_spread, 1),
            h_avg=round(h_avg, 1),
            h_max=round(h_avg + h_spread, 1),
        ))
    return tuple(plans)


def flock_arrival(
    cfg: GeneratorConfig, flock_id: int, house: HouseGeometry | None = None
) -> tuple[HouseGeometry, int, float]:
    """Placement draws for one flock: house, birds placed, arrival weight [g].

    Uses the flock's day-0 stream, so a live house started with the same
    seed and id places exactly the flock that batch generation would.
    """
    rng = _day_rng(cfg.seed, flock_id, 0)
    if house is None:
        house = cfg.houses[flock_id % len(cfg.houses)]
    short = int(rng.uniform(0.0, cfg.stocking_jitter) * house.capacity)
    arrival = cfg.arrival_weight_g + rng.uniform(
        -cfg.arrival_weight_jitter_g, cfg.arrival_weight_jitter_g
    )
    return house, house.capacity - short, arrival


def generate_flock(
    cfg: GeneratorConfig,
    plans: tuple[DayPlan, ...] | None = None,
    house: HouseGeometry | None = None,
    initial_birds: int | None = None,
    *,
    flock_id: int = 0,
    noisy: bool = True,
) -> FlockSample:
    """Run one flock for 40 days under its sampled (or supplied) plan.

    Flock 0 always rears at the comfort plan; other ids draw a perturbed
    plan, with ids (1,2), (3,4), ... sharing mirrored weekly offsets.
    """
    house, placed, arrival = flock_arrival(cfg, flock_id, house)
    if initial_birds is None:
        initial_birds = placed
    rng = _day_rng(cfg.seed, flock_id, 0)
    rng.uniform(0.0, 1.0, 2)  # skip the placement draws
    if plans is None:
        if flock_id == 0:
            plans = comfort_plans(cfg)
        elif flock_id % 2 == 0:
            # mirror the odd sibling's weekly offsets
            pair = _day_rng(cfg.seed, flock_id - 1, 0)
            pair.uniform(0.0, 1.0, 2)  # skip the sibling's stocking/arrival draws
            plans = sample_plan_set(cfg, rng, offset_rng=pair, offset_sign=-1.0)
        else:
            plans = sample_plan_set(cfg, rng)
    if len(plans) != FLOCK_DAYS:
        raise ShapeError(f"need {FLOCK_DAYS} day plans, got {len(plans)}")

    state = initial_state(initial_birds, arrival)
    mdw0, nlbpa0 = state.mdw_g, initial_birds / house.area_m2
    outcomes = []
    for plan in plans:
        day_rng = _day_rng(cfg.seed, flock_id, plan.day) if noisy else None
        state, out = step_flock_day(cfg, state, plan, house, day_rng)
        outcomes.append(out)
    return FlockSample(
        house=house,
        initial_birds=initial_birds,
        plans=tuple(plans),
        outcomes=tuple(outcomes),
        initial_conditions=(mdw0, 0.0, nlbpa0),
        flock_id=flock_id,
    )


def generate_corpus(cfg: GeneratorConfig) -> list[FlockSample]:
    """The training corpus: flock 0 at comfort, the rest sampled around it."""
    log.info("generating %d synthetic flocks (seed %d)", cfg.n_flocks, cfg.seed)
    return [generate_flock(cfg, flock_id=i) for i in range(cfg.n_flocks)]


def train_test_split(
    samples: list[FlockSample], n_test: int = 2
) -> tuple[list[FlockSample], list[FlockSample]]:
    """Last ``n_test`` flocks held out, mirroring the 10 train / 2 test split."""
    if n_test >= len(samples):
        raise InsufficientData(
            f"cannot hold out {n_test} of {len(samples)} flocks"
        )
    return samples[:-n_test] if n_test else samples, samples[-n_test:] if n_test else []


def simulate_plan_fcr(
    cfg: GeneratorConfig,
    plans: tuple[DayPlan, ...],
    house: HouseGeometry | None = None,
    initial_birds: int | None = None,
    *,
    noisy: bool = False,
    flock_key: int = 999_983,
) -> float:
    """Day-40 FCR of a plan under the generator; noise-free by default.

    This is the ground-truth evaluation used to judge plans found by the
    search pipeline.
    """
    house = house or cfg.houses[0]
    birds = initial_birds or house.capacity
    state = initial_state(birds, cfg.arrival_weight_g)
    out = None
    for plan in plans:
        rng = _day_rng(cfg.seed, flock_key, plan.day) if noisy else None
        state, out = step_flock_day(cfg, state, plan, house, rng)
    return fcr_basic(out.dfc, out.nlb, out.mdw)


# --- persistence ------------------------------------------------------------

def store_samples(samples: list[FlockSample], path: str | Path) -> None:
    """Write the corpus as delimited rows plus a geometry sidecar.

    Day 0 carries the placement state (plan fields empty); days 1..40 carry
    the applied plan and the observed outcome.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for s in samples:
            mdw0, _, _ = s.initial_conditions
            writer.writerow([s.flock_id, 0, "", "", "", "", "", "",
                             int(mdw0), 0, 0, s.initial_birds])
            for plan, out in zip(s.plans, s.outcomes):
                writer.writerow([
                    s.flock_id, plan.day,
                    plan.t_min, plan.t_avg, plan.t_max,
                    plan.h_min, plan.h_avg, plan.h_max,
                    int(out.mdw), int(out.dfc), out.dm, out.nlb,
                ])
    meta = {
        "schema_version": SCHEMA_VERSION,
        "flocks": {
            str(s.flock_id): {
                "length_m": s.house.length_m,
                "width_m": s.house.width_m,
                "capacity": s.house.capacity,
                "initial_birds": s.initial_birds,
                "arrival_weight_g": s.initial_conditions[0],
            }
            for s in samples
        },
    }
    _meta_path(path).write_text(json.dumps(meta, indent=2))
    log.info("wrote %d flocks to %s", len(samples), path)


def _meta_path(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def load_samples(path: str | Path) -> list[FlockSample]:
    """Read a corpus back; an empty file yields an empty list."""
    path = Path(path)
    rows: dict[int, dict[int, list[str]]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != CSV_COLUMNS:
            raise ParseError(f"unexpected header in {path}: {header}", line=1)
        for n, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise ParseError(f"row has {len(row)} fields", line=n)
            try:
                fid, day = int(row[0]), int(row[1])
            except ValueError as exc:
                raise ParseError(f"bad flock_id/day: {exc}", line=n) from None
            if day in rows.setdefault(fid, {}):
                raise ParseError(f"duplicate day {day} for flock {fid}", line=n)
            rows[fid][day] = row
    if not rows:
        return []

    meta_path = _meta_path(path)
    if not meta_path.exists():
        raise ParseError(f"missing geometry sidecar {meta_path}")
    meta = json.loads(meta_path.read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"sidecar schema_version {meta.get('schema_version')!r}, "
            f"expected {SCHEMA_VERSION}"
        )

    samples = []
    for fid in sorted(rows):
        byday = rows[fid]
        if set(byday) != set(range(FLOCK_DAYS + 1)):
            missing = sorted(set(range(FLOCK_DAYS + 1)) - set(byday))
            raise ParseError(f"flock {fid}: missing days {missing[:5]}")
        m = meta["flocks"].get(str(fid))
        if m is None:
            raise ParseError(f"flock {fid} absent from sidecar {meta_path}")
        house = HouseGeometry(m["length_m"], m["width_m"], m["capacity"])
        area = house.area_m2
        day0 = byday[0]
        birds0 = int(day0[11])
        plans, outcomes = [], []
        for day in range(1, FLOCK_DAYS + 1):
            r = byday[day]
            try:
                plans.append(DayPlan(
                    day=day,
                    t_min=float(r[2]), t_avg=float(r[3]), t_max=float(r[4]),
                    h_min=float(r[5]), h_avg=float(r[6]), h_max=float(r[7]),
                ))
                mdw, dfc = float(r[8]), float(r[9])
                dm, nlb = int(r[10]), int(r[11])
            except ValueError as exc:
                raise ParseError(f"flock {fid} day {day}: {exc}") from None
            outcomes.append(DayOutcome(
                mdw=mdw, dfcpb=dfc / nlb if nlb else 0.0, nlbpa=nlb / area,
                dm=dm, nlb=nlb, dfc=dfc, dmpa=dm / area,
            ))
        samples.append(FlockSample(
            house=house,
            initial_birds=birds0,
            plans=tuple(plans),
            outcomes=tuple(outcomes),
            initial_conditions=(float(day0[8]), 0.0, birds0 / area),
            flock_id=fid,
        ))
    return samples


# --- week slicing for model training ---------------------------------------

@dataclass(frozen=True)
class WeeklyDataset:
    """Flat per-week training matrices in the week-input layout.

    Each input row is [day-1 plan (7), previous-day outputs (3), day-2 plan,
    ..., day-wS plan]; each target row is the wS daily output triples
    concatenated day-major.
    """

    week_index: int
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        ws = week_size(self.week_index)
        n, width = self.inputs.shape
        if width != 7 * ws + 3:
            raise ShapeError(
                f"week {self.week_index}: input width {width}, "
                f"expected {7 * ws + 3}"
            )
        if self.targets.shape != (n, 3 * ws):
            raise ShapeError(
                f"week {self.week_index}: target shape {self.targets.shape}, "
                f"expected ({n}, {3 * ws})"
            )

    @property
    def week_len(self) -> int:
        return week_size(self.week_index)


def week_training_arrays(
    samples: list[FlockSample], week: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-flock (plans, boundary seed, targets) for one production week.

    Returns ``plans`` of shape (n, wS, 7), ``seeds`` (n, 3) holding the
    outcome of the day before the week starts, and ``targets`` (n, wS, 3).
    """
    start, end = week_span(week)
    plans, seeds, targets = [], [], []
    for s in samples:
        pm, om = s.plan_matrix(), s.outcome_matrix()
        plans.append(pm[start - 1:end])
        if start == 1:
            seeds.append(np.array(s.initial_conditions, dtype=float))
        else:
            seeds.append(om[start - 2])
        targets.append(om[start - 1:end])
    return np.stack(plans), np.stack(seeds), np.stack(targets)


def flatten_week_input(plans: np.ndarray, seed: np.ndarray) -> np.ndarray:
    """(wS, 7) plan block + (3,) boundary outputs -> flat week-input row."""
    return np.concatenate([plans[0], seed, plans[1:].reshape(-1)])


def partition_weeks(samples: list[FlockSample]) -> list[WeeklyDataset]:
    """Slice a corpus into the six weekly datasets used for model training."""
    if not samples:
        raise InsufficientData("cannot partition an empty corpus")
    out = []
    for week in range(1, N_WEEKS + 1):
        plans, seeds, targets = week_training_arrays(samples, week)
        inputs = np.stack([
            flatten_week_input(p, s) for p, s in zip(plans, seeds)
        ])
        out.append(WeeklyDataset(
            week_index=week,
            inputs=inputs,
            targets=targets.reshape(len(samples), -1),
        ))
    return out


def split_week_input(row: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flat week-input row -> ((wS, 7) plan block, (3,) boundary outputs)."""
    row = np.asarray(row, dtype=float)
    ws = (row.size - 3) // 7
    if row.size != 7 * ws + 3:
        raise ShapeError(f"week-input length {row.size} does not fit 7*wS+3")
    plans = np.concatenate([row[:7], row[10:]]).reshape(ws, 7)
    return plans, row[7:10].copy()


def ve_bounds_from_matrices(inputs: np.ndarray, targets: np.ndarray) -> Bounds:
    """Scaling bounds over the flat week-input layout, derived from matrices.

    Day positions are fixed to [1, 40]; each climate column pools the week's
    days across the corpus; the three output slots cover the targets plus
    the boundary-day values, so recycled predictions stay in range. The
    slot bounds double as the output bounds.
    """
    n, width = inputs.shape
    ws = (width - 3) // 7
    if width != 7 * ws + 3 or targets.shape != (n, 3 * ws):
        raise ShapeError(
            f"inconsistent week matrices: inputs {inputs.shape}, "
            f"targets {targets.shape}"
        )
    day_blocks = np.stack([split_week_input(r)[0] for r in inputs])  # (n, wS, 7)
    col_mini = day_blocks.reshape(-1, 7).min(axis=0)
    col_maxi = day_blocks.reshape(-1, 7).max(axis=0)
    col_mini[0], col_maxi[0] = 1.0, float(FLOCK_DAYS)
    out_all = np.concatenate([inputs[:, 7:10], targets.reshape(-1, 3)])
    slot_mini, slot_maxi = out_all.min(axis=0), out_all.max(axis=0)

    mini = np.concatenate([col_mini, slot_mini] + [col_mini] * (ws - 1))
    maxi = np.concatenate([col_maxi, slot_maxi] + [col_maxi] * (ws - 1))
    return Bounds(mini, maxi)


def week_bounds(samples: list[FlockSample], week: int) -> Bounds:
    """Scaling bounds for one production week of a corpus."""
    plans, seeds, targets = week_training_arrays(samples, week)
    inputs = np.stack([flatten_week_input(p, s) for p, s in zip(plans, seeds)])
    return ve_bounds_from_matrices(inputs, targets.reshape(len(samples), -1))


def boundary_outcome_ranges(samples: list[FlockSample], week: int) -> Bounds:
    """Observed range of the outcome on the day before ``week`` starts.

    Boxes the three free state genes when a week is searched on its own.
    """
    _, seeds, _ = week_training_arrays(samples, week)
    return Bounds(seeds.min(axis=0), seeds.max(axis=0))


# --- descriptive statistics -------------------------------------------------

def weekly_confidence_interval(
    samples: list[FlockSample], level: float = 0.95
) -> list[dict]:
    """Student-t intervals for the pooled Tavg and Havg of each week.

    Pools every flock-day in the week; returns one record per week with
    (mean, lo, hi) for both climate variables.
    """
    if len(samples) < 2:
        raise InsufficientData("confidence intervals need at least 2 flocks")
    out = []
    for week in range(1, N_WEEKS + 1):
        start, end = week_span(week)
        t_vals, h_vals = [], []
        for s in samples:
            for p in s.plans[start - 1:end]:
                t_vals.append(p.t_avg)
                h_vals.append(p.h_avg)
        rec = {"week": week}
        for name, vals in (("t_avg", t_vals), ("h_avg", h_vals)):
            arr = np.asarray(vals)
            n = arr.size
            mean = float(arr.mean())
            sd = float(arr.std(ddof=1))
            half = 0.0
            if sd > 0:
                half = float(sd / np.sqrt(n) * stats.t.ppf(0.5 + level / 2, df=n - 1))
            rec[name] = {"mean": mean, "lo": mean - half, "hi": mean + half}
        out.append(rec)
    return out


def daily_mean_ci(
    samples: list[FlockSample], channel: int, confidence: float = 0.95
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Across-flock daily mean and t-interval for one output channel.

    Channels: 0 = mean daily weight, 1 = feed per bird, 2 = density.
    """
    if not samples:
        raise InsufficientData("empty corpus")
    data = np.stack([s.outcome_matrix()[:, channel] for s in samples])
    n = data.shape[0]
    mean = data.mean(axis=0)
    days = np.arange(1, FLOCK_DAYS + 1)
    if n < 2:
        return days, mean, mean.copy(), mean.copy()
    sem = data.std(axis=0, ddof=1) / np.sqrt(n)
    half = sem * stats.t.ppf(0.5 + confidence / 2.0, df=n - 1)
    return days, mean, mean - half, mean + half


def zscore(values) -> np.ndarray:
    """Standard scores of a series: mean 0, variance 1 (population form)."""
    arr = np.asarray(values, dtype=float)
    sd = arr.std()
    if sd == 0:
        raise InsufficientData("cannot z-score a constant series")
    return (arr - arr.mean()) / sd


@dataclass(frozen=True)
class OutlierDecision:
    """Result of screening a candidate flock against corpus history."""

    reject: bool
    flagged_days: dict[str, tuple[int, ...]]  # channel name -> day numbers
    max_zscore: float


_CHANNELS = ("mdw", "dfcpb", "nlbpa")


def detect_outlier_flock(
    candidate: FlockSample,
    history: list[FlockSample],
    threshold: float = 4.0,
    min_days: int = 5,
) -> OutlierDecision:
    """Flag a flock whose output series strays far from corpus history.

    Any channel whose per-day standard score exceeds ``threshold`` on at
    least ``min_days`` days marks the flock as an outlier (atypical event,
    for example a disease or panic burst) to be excluded from retraining.
    """
    if len(history) < 3:
        raise InsufficientHistory(
            f"outlier screening needs >= 3 reference flocks, got {len(history)}"
        )
    hist = np.stack([s.outcome_matrix() for s in history])  # (n, 40, 3)
    mean = hist.mean(axis=0)
    sd = hist.std(axis=0, ddof=1)
    sd = np.where(sd == 0, np.inf, sd)
    z = (candidate.outcome_matrix() - mean) / sd  # (40, 3)

    flagged: dict[str, tuple[int, ...]] = {}
    reject = False
    for ch, name in enumerate(_CHANNELS):
        days = tuple(int(d + 1) for d in np.nonzero(np.abs(z[:, ch]) > threshold)[0])
        flagged[name] = days
        if len(days) >= min_days:
            reject = True
    return OutlierDecision(
        reject=reject,
        flagged_days=flagged,
        max_zscore=float(np.max(np.abs(z))),
    )
