"""Reverse-week construction of a full 40-day climate plan.

The six weekly surrogates are searched from week 6 back to week 1: week 6
minimizes the flock's final feed conversion, every earlier week minimizes
the mismatch between its predicted boundary state and the state the
already-optimized following week expects.  Chaining the result forward
again (week 1 to 6) gives the realized conversion estimate and the
arrival conditions the plan implies.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataset import (
    N_WEEKS,
    WeeklyDataset,
    partition_weeks,
    ve_length,
    week_size,
)
from .domain import DayPlan, FlockSample, fcr_normalized, minmax_denorm, minmax_norm
from .errors import (
    BudgetExceeded,
    ConfigDomain,
    DimensionMismatch,
    FitnessNonFinite,
    ParseError,
    SchemaVersionError,
    ShapeError,
)
from .evolve import GaConfig, GaResult, HistoryRow, Restrictions, init_population, run_ga
from .surrogate import WeekModel, forward_week_many

SCHEMA_VERSION = 1

# search profile for the weekly runs: full population, patience-bounded
PLANNER_GA = GaConfig(
    pop_size=200,
    beta=0.6,
    mutation_probability=0.02,
    mutation_scale=0.01,
    stall_generations=200,
    max_iterations=2000,
    seed=97,
)

_SLOT = slice(7, 10)


def _day_starts(ws: int) -> list[int]:
    """Offsets of each 7-gene day block inside a flat week genome."""
    return [0] + [7 * t - 4 for t in range(2, ws + 1)]


def gene_kind(position: int, ws: int) -> str:
    """Classify a genome position: 'day', 't', 'h', or 'slot'."""
    if not 0 <= position < 7 * ws + 3:
        raise DimensionMismatch(
            f"position {position} outside a {7 * ws + 3}-gene genome"
        )
    if 7 <= position <= 9:
        return "slot"
    rel = position if position < 7 else (position - 3) % 7
    if rel == 0:
        return "day"
    return "t" if rel <= 3 else "h"


def repair_week_genomes(genomes: np.ndarray) -> np.ndarray:
    """Pull each day's min/max rails to its mean where they cross.

    Free-floating genes can propose t_min above t_avg; the evaluated and
    exported plan uses min(t_min, t_avg) and max(t_max, t_avg) (same for
    humidity), which keeps every repaired value inside data-derived boxes.
    """
    g = np.atleast_2d(np.asarray(genomes, dtype=float)).copy()
    ws = (g.shape[1] - 3) // 7
    if g.shape[1] != 7 * ws + 3:
        raise ShapeError(f"genome width {g.shape[1]} does not fit 7*wS+3")
    for base in _day_starts(ws):
        g[:, base + 1] = np.minimum(g[:, base + 1], g[:, base + 2])
        g[:, base + 3] = np.maximum(g[:, base + 3], g[:, base + 2])
        g[:, base + 4] = np.minimum(g[:, base + 4], g[:, base + 5])
        g[:, base + 6] = np.maximum(g[:, base + 6], g[:, base + 5])
    return g


# --- fitness functions ------------------------------------------------------

def fitness_week6(genome: Sequence[float], model: WeekModel) -> float:
    """Predicted day-40 feed conversion of a final-week genome."""
    g = repair_week_genomes(genome)
    last, _ = forward_week_many(model, g, mode="strict")
    mdw, dfcpb, nlbpa = (float(v) for v in last[0])
    return fcr_normalized(dfcpb, nlbpa, mdw)


def fitness_boundary(
    genome: Sequence[float], model: WeekModel, y_first_next: Sequence[float]
) -> float:
    """Mean absolute mismatch against the next week's expected start state.

    ``y_first_next`` is the following week's three state genes, already
    normalized with this model's output scaling; the comparison runs in
    that normalized space so the three outputs weigh equally.
    """
    y = np.asarray(y_first_next, dtype=float)
    if y.shape != (3,):
        raise DimensionMismatch(f"y_first_next has shape {y.shape}, expected (3,)")
    g = repair_week_genomes(genome)
    _, traj = forward_week_many(model, g, mode="strict")
    return float(np.mean(np.abs(traj[0, -1] - y)))


def _batch_week6(model: WeekModel) -> Callable[[np.ndarray], np.ndarray]:
    def fitness(genomes: np.ndarray) -> np.ndarray:
        last, _ = forward_week_many(model, repair_week_genomes(genomes), mode="strict")
        return 1000.0 * last[:, 1] / last[:, 0]

    return fitness


def _batch_boundary(
    model: WeekModel, target_n: np.ndarray
) -> Callable[[np.ndarray], np.ndarray]:
    def fitness(genomes: np.ndarray) -> np.ndarray:
        _, traj = forward_week_many(model, repair_week_genomes(genomes), mode="strict")
        return np.mean(np.abs(traj[:, -1] - target_n), axis=1)

    return fitness


# --- search space -----------------------------------------------------------

def week_restrictions(weekly: WeeklyDataset) -> Restrictions:
    """Per-position search box from the observed corpus envelope.

    Day-index positions are constant across flocks and therefore freeze to
    a point; the three state genes span the observed boundary outcomes.
    """
    return Restrictions(weekly.inputs.min(axis=0), weekly.inputs.max(axis=0))


def corpus_restrictions(samples: list[FlockSample]) -> tuple[Restrictions, ...]:
    """One search box per production week, derived from a corpus."""
    return tuple(week_restrictions(w) for w in partition_weeks(samples))


# --- the final plan ---------------------------------------------------------

@dataclass
class FinalActionPlan:
    """Six optimized week genomes plus the arrival conditions they imply."""

    weeks: tuple[np.ndarray, ...]
    i_c: np.ndarray
    fcr_est: float | None = None
    fcr_res: float | None = None

    def __post_init__(self):
        if len(self.weeks) != N_WEEKS:
            raise ShapeError(f"{len(self.weeks)} week rows, expected {N_WEEKS}")
        self.weeks = tuple(
            np.asarray(w, dtype=float) for w in self.weeks
        )
        next_day = 1
        for week, genome in enumerate(self.weeks, start=1):
            want = ve_length(week)
            if genome.shape != (want,):
                raise ShapeError(
                    f"week {week} genome has shape {genome.shape}, expected ({want},)"
                )
            for base in _day_starts(week_size(week)):
                day = genome[base]
                if abs(day - round(day)) > 1e-6 or round(day) != next_day:
                    raise ShapeError(
                        f"week {week}: day gene {day!r} breaks the 1..40 sequence"
                    )
                next_day += 1
        self.i_c = np.asarray(self.i_c, dtype=float)
        if self.i_c.shape != (3,):
            raise ShapeError(f"i_c has shape {self.i_c.shape}, expected (3,)")

    def to_day_plans(self) -> list[DayPlan]:
        """Expand to 40 ordered daily setpoint records (rails repaired)."""
        plans = []
        for week, genome in enumerate(self.weeks, start=1):
            repaired = repair_week_genomes(genome)[0]
            for base in _day_starts(week_size(week)):
                d = repaired[base:base + 7]
                plans.append(DayPlan(
                    day=int(round(d[0])),
                    t_min=float(d[1]), t_avg=float(d[2]), t_max=float(d[3]),
                    h_min=float(d[4]), h_avg=float(d[5]), h_max=float(d[6]),
                ))
        return plans


def flock_to_plan(sample: FlockSample) -> FinalActionPlan:
    """Recast a recorded flock as a plan document.

    Week genomes take the flock's daily setpoints; the state genes carry
    the outcomes actually observed at each week boundary.
    """
    pm, om = sample.plan_matrix(), sample.outcome_matrix()
    weeks = []
    start = 0
    for week in range(1, N_WEEKS + 1):
        ws = week_size(week)
        block = pm[start:start + ws]
        seed = (np.asarray(sample.initial_conditions, dtype=float)
                if week == 1 else om[start - 1])
        weeks.append(np.concatenate([block[0], seed, block[1:].reshape(-1)]))
        start += ws
    return FinalActionPlan(
        weeks=tuple(weeks),
        i_c=np.asarray(sample.initial_conditions, dtype=float),
    )


def plan_to_json(plan: FinalActionPlan) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "weeks": [
            {
                "week": w,
                "genome": genome.tolist(),
                "expanded_days": None,
            }
            for w, genome in enumerate(plan.weeks, start=1)
        ],
        "i_c": plan.i_c.tolist(),
        "fcr_est": plan.fcr_est,
        "fcr_res": plan.fcr_res,
    }
    days = plan.to_day_plans()
    cursor = 0
    for entry in doc["weeks"]:
        ws = week_size(entry["week"])
        entry["expanded_days"] = [
            {
                "day": p.day,
                "t_min": p.t_min, "t_avg": p.t_avg, "t_max": p.t_max,
                "h_min": p.h_min, "h_avg": p.h_avg, "h_max": p.h_max,
            }
            for p in days[cursor:cursor + ws]
        ]
        cursor += ws
    return json.dumps(doc, indent=2)


def plan_from_json(text: str) -> FinalActionPlan:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"plan is not valid JSON: {exc}") from None
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"plan schema_version {version!r}, expected {SCHEMA_VERSION}"
        )
    try:
        weeks = tuple(
            np.asarray(entry["genome"], dtype=float) for entry in doc["weeks"]
        )
        return FinalActionPlan(
            weeks=weeks,
            i_c=np.asarray(doc["i_c"], dtype=float),
            fcr_est=doc.get("fcr_est"),
            fcr_res=doc.get("fcr_res"),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad plan document: {exc}") from None


def plan_to_csv(plan: FinalActionPlan, path: str | Path) -> None:
    """Write the 40 expanded daily rows for downstream dispatch."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "t_min", "t_avg", "t_max", "h_min", "h_avg", "h_max"])
        for p in plan.to_day_plans():
            writer.writerow([p.day, p.t_min, p.t_avg, p.t_max,
                             p.h_min, p.h_avg, p.h_max])


# --- the reverse-week optimization ------------------------------------------

@dataclass(frozen=True)
class BoundaryError:
    """Stitch quality between one week's prediction and the next week's start."""

    week: int
    absolute: np.ndarray
    relative: np.ndarray


@dataclass
class PlannerReport:
    fcr_est: float
    fcr_res: float
    boundary_errors: list[BoundaryError]
    histories: dict[int, list[HistoryRow]]
    stopped_by: dict[int, str]
    runtimes: dict[int, float]


def _check_suite(models, restrictions) -> None:
    if len(models) != N_WEEKS or len(restrictions) != N_WEEKS:
        raise DimensionMismatch(
            f"need {N_WEEKS} models and restriction boxes, got "
            f"{len(models)} and {len(restrictions)}"
        )
    for week, (m, r) in enumerate(zip(models, restrictions), start=1):
        if m.week_index != week:
            raise DimensionMismatch(
                f"model at slot {week} is for week {m.week_index}"
            )
        if r.size != m.input_length:
            raise DimensionMismatch(
                f"week {week}: box has {r.size} genes, model expects "
                f"{m.input_length}"
            )


def optimize_flock(
    models: Sequence[WeekModel],
    restrictions: Sequence[Restrictions],
    ga_config: GaConfig | None = None,
) -> tuple[FinalActionPlan, np.ndarray, PlannerReport]:
    """Search all six weeks in reverse and assemble the final plan.

    Week 6 minimizes predicted day-40 conversion; weeks 5..1 each minimize
    the boundary mismatch against the week already fixed after them.  The
    week-1 state genes become the recommended arrival conditions.  The
    report carries the per-boundary error table, every convergence
    history, and the realized conversion of the forward rollout.
    """
    models = tuple(models)
    restrictions = tuple(restrictions)
    _check_suite(models, restrictions)
    cfg = ga_config if ga_config is not None else PLANNER_GA

    results: dict[int, GaResult] = {}
    genomes: dict[int, np.ndarray] = {}

    res6 = run_ga(
        _batch_week6(models[5]),
        restrictions[5],
        replace(cfg, seed=cfg.seed + 6),
        vectorized=True,
    )
    results[6] = res6
    genomes[6] = res6.best_genome

    for week in range(5, 0, -1):
        model = models[week - 1]
        maxi, mini = model.output_bounds
        target_n = minmax_norm(genomes[week + 1][_SLOT], maxi, mini, mode="strict")
        res = run_ga(
            _batch_boundary(model, target_n),
            restrictions[week - 1],
            replace(cfg, seed=cfg.seed + week),
            vectorized=True,
        )
        results[week] = res
        genomes[week] = res.best_genome

    i_c = genomes[1][_SLOT].copy()
    boundary_rows = []
    for week in range(5, 0, -1):
        pred, _ = forward_week_many(
            models[week - 1], repair_week_genomes(genomes[week]), mode="strict"
        )
        target = genomes[week + 1][_SLOT]
        absolute = np.abs(pred[0] - target)
        boundary_rows.append(BoundaryError(
            week=week,
            absolute=absolute,
            relative=absolute / np.abs(target),
        ))

    plan = FinalActionPlan(
        weeks=tuple(genomes[w] for w in range(1, N_WEEKS + 1)),
        i_c=i_c,
        fcr_est=float(res6.best_fitness),
    )
    fcr_res, _ = rollout_progressive(models, plan)
    plan.fcr_res = fcr_res

    report = PlannerReport(
        fcr_est=float(res6.best_fitness),
        fcr_res=fcr_res,
        boundary_errors=boundary_rows,
        histories={w: results[w].history for w in results},
        stopped_by={w: results[w].stopped_by for w in results},
        runtimes={w: results[w].runtime_s for w in results},
    )
    return plan, i_c, report


def rollout_progressive(
    models: Sequence[WeekModel], plan: FinalActionPlan
) -> tuple[float, np.ndarray]:
    """Chain the plan forward through all six weeks.

    Week 1 starts from the plan's arrival conditions; each later week's
    state genes are replaced by the previous week's predicted boundary
    outputs (clamped into each model's scaling range, since chained
    predictions may drift past the observed envelope).  Returns the
    day-40 conversion and the full (40, 3) predicted trajectory.
    """
    models = tuple(models)
    if len(models) != N_WEEKS:
        raise DimensionMismatch(f"need {N_WEEKS} models, got {len(models)}")
    state = plan.i_c.copy()
    days = []
    for week in range(1, N_WEEKS + 1):
        model = models[week - 1]
        genome = plan.weeks[week - 1].copy()
        genome[_SLOT] = state
        repaired = repair_week_genomes(genome)
        last, traj_n = forward_week_many(model, repaired, mode="clamp")
        maxi, mini = model.output_bounds
        days.append(minmax_denorm(traj_n[0], maxi, mini))
        state = last[0]
    trajectory = np.vstack(days)
    mdw, dfcpb, nlbpa = (float(v) for v in trajectory[-1])
    return fcr_normalized(dfcpb, nlbpa, mdw), trajectory


# --- exhaustive reference search --------------------------------------------

@dataclass(frozen=True)
class OracleResult:
    best_genome: np.ndarray
    best_fitness: float
    evaluations: int


def climate_grid_steps(
    r: Restrictions,
    t_step: float = 0.5,
    h_step: float = 1.0,
    slot_fraction: float = 0.1,
) -> np.ndarray:
    """Grid resolution per gene: 0.5 degrees, 1 percent, tenth-span states."""
    ws = (r.size - 3) // 7
    if r.size != 7 * ws + 3:
        raise ShapeError(f"box size {r.size} does not fit a week genome")
    steps = np.empty(r.size)
    span = r.span()
    for pos in range(r.size):
        kind = gene_kind(pos, ws)
        if kind == "t":
            steps[pos] = t_step
        elif kind == "h":
            steps[pos] = h_step
        elif kind == "slot":
            steps[pos] = span[pos] * slot_fraction if span[pos] > 0 else 1.0
        else:
            steps[pos] = 1.0
    return steps


def exhaustive_oracle(
    fitness,
    r: Restrictions,
    steps: Sequence[float],
    budget: int = 10_000_000,
    vectorized: bool = False,
    chunk: int = 65536,
) -> OracleResult:
    """Enumerate the full grid over the box and return the argmin.

    Frozen genes (zero-width interval) contribute a single point; every
    free gene is sampled from its lower bound in ``steps`` increments,
    keeping the upper bound when the step divides the span.  The grid
    cardinality is computed first and compared against ``budget`` before
    any evaluation happens.
    """
    steps = np.asarray(steps, dtype=float)
    if steps.shape != (r.size,):
        raise DimensionMismatch(
            f"steps has shape {steps.shape}, expected ({r.size},)"
        )
    axes = []
    for i in range(r.size):
        if r.lower[i] == r.upper[i]:
            axes.append(np.array([r.lower[i]]))
            continue
        if steps[i] <= 0.0:
            raise ConfigDomain(f"gene {i} is free but its step is {steps[i]}")
        count = int(math.floor((r.upper[i] - r.lower[i]) / steps[i] + 1e-9)) + 1
        axes.append(r.lower[i] + steps[i] * np.arange(count))
    cardinality = math.prod(len(a) for a in axes)
    if cardinality > budget:
        raise BudgetExceeded(cardinality, budget)

    shape = [len(a) for a in axes]
    best_value = math.inf
    best_genome = None
    for start in range(0, cardinality, chunk):
        flat = np.arange(start, min(start + chunk, cardinality))
        coords = np.unravel_index(flat, shape)
        genomes = np.column_stack([axes[i][coords[i]] for i in range(r.size)])
        if vectorized:
            values = np.asarray(fitness(genomes), dtype=float)
        else:
            values = np.array([float(fitness(g)) for g in genomes])
        bad = ~np.isfinite(values)
        if bad.any():
            raise FitnessNonFinite(genomes[int(np.argmax(bad))].copy())
        pick = int(np.argmin(values))
        if values[pick] < best_value:
            best_value = float(values[pick])
            best_genome = genomes[pick].copy()
    return OracleResult(
        best_genome=best_genome,
        best_fitness=best_value,
        evaluations=cardinality,
    )


# --- random-plan benchmark --------------------------------------------------

@dataclass
class RandomBenchmark:
    """Distribution of realized conversions over random feasible plans."""

    fcrs: np.ndarray
    best_fcr: float
    best_plan: FinalActionPlan
    mean: float
    std: float


def benchmark_random_specialists(
    models: Sequence[WeekModel],
    restrictions: Sequence[Restrictions],
    n: int = 1000,
    seed: int = 0,
) -> RandomBenchmark:
    """Roll out ``n`` uniformly sampled feasible plans and summarize.

    Sampling is per week inside each restriction box; every plan is then
    chained forward exactly like an optimized one, so the resulting
    distribution is directly comparable with a searched plan's realized
    conversion.
    """
    models = tuple(models)
    restrictions = tuple(restrictions)
    _check_suite(models, restrictions)
    if n < 1:
        raise ConfigDomain("benchmark needs at least one plan")
    rng = np.random.default_rng(seed)
    sampled = [init_population(r, n, rng).genomes for r in restrictions]

    state = sampled[0][:, _SLOT].copy()
    for week in range(1, N_WEEKS + 1):
        genomes = sampled[week - 1]
        if week > 1:
            genomes = genomes.copy()
            genomes[:, _SLOT] = state
            sampled[week - 1] = genomes
        last, _ = forward_week_many(
            models[week - 1], repair_week_genomes(genomes), mode="clamp"
        )
        state = last
    fcrs = 1000.0 * state[:, 1] / state[:, 0]

    best = int(np.argmin(fcrs))
    best_plan = FinalActionPlan(
        weeks=tuple(sampled[w][best] for w in range(N_WEEKS)),
        i_c=sampled[0][best, _SLOT].copy(),
        fcr_res=float(fcrs[best]),
    )
    return RandomBenchmark(
        fcrs=fcrs,
        best_fcr=float(fcrs[best]),
        best_plan=best_plan,
        mean=float(fcrs.mean()),
        std=float(fcrs.std()),
    )
