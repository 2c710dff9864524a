"""Real-valued genetic algorithm with box restrictions.

Minimization convention throughout: lower fitness is better.  Selection is
stochastic-uniform over rank weights, crossover is the heuristic blend
child = p2 + beta * (p1 - p2) toward the fitter parent, and mutation is a
small multiplicative jolt that never leaves the feasible box.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import (
    ConfigDomain,
    DimensionMismatch,
    EmptyPopulation,
    FitnessNonFinite,
    ParseError,
    SchemaVersionError,
)

SCHEMA_VERSION = 1

DEFAULT_POP_SIZE = 200
DEFAULT_BETA = 0.6


class Restrictions:
    """Closed axis-aligned box: lower[i] <= gene[i] <= upper[i]."""

    def __init__(self, lower: Sequence[float], upper: Sequence[float]):
        lo = np.asarray(lower, dtype=np.float64)
        up = np.asarray(upper, dtype=np.float64)
        if lo.ndim != 1 or up.ndim != 1 or lo.shape != up.shape:
            raise DimensionMismatch(
                f"bounds must be equal-length vectors, got {lo.shape} and {up.shape}"
            )
        if lo.size == 0:
            raise ConfigDomain("restrictions need at least one gene")
        if not (np.isfinite(lo).all() and np.isfinite(up).all()):
            raise ConfigDomain("restriction bounds must be finite")
        if (lo > up).any():
            bad = int(np.argmax(lo > up))
            raise ConfigDomain(
                f"lower bound exceeds upper bound at gene {bad}"
            )
        self.lower = lo
        self.upper = up
        self.lower.flags.writeable = False
        self.upper.flags.writeable = False

    @property
    def size(self) -> int:
        return int(self.lower.size)

    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def clamp(self, genes: np.ndarray) -> np.ndarray:
        return np.clip(genes, self.lower, self.upper)

    def as_inequality(self) -> tuple[np.ndarray, np.ndarray]:
        """Export the box as A @ x <= b.

        Rows come in (+1, -1) pairs per gene: row 2i enforces the upper
        bound of gene i, row 2i+1 the lower bound (as -x[i] <= -lower[i]).
        """
        n = self.size
        a = np.zeros((2 * n, n))
        b = np.empty(2 * n)
        for i in range(n):
            a[2 * i, i] = 1.0
            a[2 * i + 1, i] = -1.0
            b[2 * i] = self.upper[i]
            b[2 * i + 1] = -self.lower[i]
        return a, b

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Restrictions)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def __repr__(self) -> str:
        return f"Restrictions(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


@dataclass
class RestrictionCheck:
    """Outcome of a feasibility check; truthy iff the genome is feasible.

    ``row`` indexes the violated inequality in ``as_inequality`` order, so
    row 2i is the upper bound of gene i and row 2i+1 its lower bound.
    """

    ok: bool
    row: int | None = None
    detail: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def check_restrictions(genes: Sequence[float], r: Restrictions) -> RestrictionCheck:
    """Report whether a genome lies inside the box, naming the first violation."""
    g = np.asarray(genes, dtype=np.float64)
    if g.ndim != 1 or g.size != r.size:
        raise DimensionMismatch(
            f"genome has shape {g.shape}, restrictions expect ({r.size},)"
        )
    for i in range(r.size):
        if g[i] > r.upper[i]:
            return RestrictionCheck(
                False, 2 * i,
                f"gene {i} = {g[i]} exceeds upper bound {r.upper[i]}",
            )
        if g[i] < r.lower[i]:
            return RestrictionCheck(
                False, 2 * i + 1,
                f"gene {i} = {g[i]} is below lower bound {r.lower[i]}",
            )
    return RestrictionCheck(True)


@dataclass
class GaConfig:
    """Search knobs; defaults follow the tuned operating point."""

    pop_size: int = DEFAULT_POP_SIZE
    beta: float = DEFAULT_BETA
    mutation_probability: float = 0.02
    # fraction of each gene's range; the multiplicative delta per mutated
    # gene is uniform in +-(mutation_scale * span)
    mutation_scale: float = 0.01
    stall_generations: int = 200
    max_iterations: int = 2000
    fitness_target: float | None = None
    time_budget_s: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.pop_size < 1:
            raise ConfigDomain("pop_size must be at least 1")
        if not 0.1 <= self.beta <= 1.2:
            raise ConfigDomain("beta outside the supported range [0.1, 1.2]")
        if not 0.0 <= self.mutation_probability <= 1.0:
            raise ConfigDomain("mutation_probability must lie in [0, 1]")
        if self.mutation_scale < 0.0:
            raise ConfigDomain("mutation_scale must be non-negative")
        if self.stall_generations < 1 or self.max_iterations < 1:
            raise ConfigDomain("generation limits must be at least 1")
        if self.time_budget_s is not None and self.time_budget_s <= 0.0:
            raise ConfigDomain("time_budget_s must be positive when set")

    def to_json(self) -> str:
        doc = asdict(self)
        doc["schema_version"] = SCHEMA_VERSION
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GaConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"config is not valid JSON: {exc}") from None
        version = doc.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(
                f"config schema_version {version!r}, expected {SCHEMA_VERSION}"
            )
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ParseError(f"bad config field: {exc}") from None


@dataclass
class Population:
    """One generation: row-per-individual gene matrix plus its fitness."""

    genomes: np.ndarray
    generation: int = 0
    fitness: np.ndarray | None = None

    def __post_init__(self):
        if self.genomes.ndim != 2:
            raise DimensionMismatch("population must be a 2-D matrix")


def init_population(
    r: Restrictions,
    pop_size: int = DEFAULT_POP_SIZE,
    seed: int | np.random.Generator = 0,
) -> Population:
    """Draw pop_size genomes uniformly i.i.d. inside the box."""
    if pop_size < 1:
        raise ConfigDomain("pop_size must be at least 1")
    rng = np.random.default_rng(seed)
    genomes = rng.uniform(r.lower, r.upper, size=(pop_size, r.size))
    # uniform(a, a) draws from an empty interval; pin degenerate genes
    degenerate = r.lower == r.upper
    if degenerate.any():
        genomes[:, degenerate] = r.lower[degenerate]
    return Population(genomes=genomes)


def select_parents_su(
    fitness: np.ndarray, rng: np.random.Generator
) -> tuple[int, int]:
    """Stochastic-uniform pick of two parents; the second index is the fitter.

    Individuals are laid on a line with length proportional to a linear
    rank weight (best rank gets weight n, worst gets 1), then two pointers
    with equal spacing and one shared random offset select the pair.  Rank
    ties are broken by a random permutation so equal fitness means equal
    chances.
    """
    f = np.asarray(fitness, dtype=np.float64)
    if f.size == 0:
        raise EmptyPopulation("cannot select parents from an empty population")
    n = f.size
    if n == 1:
        return 0, 0

    perm = rng.permutation(n)
    order = perm[np.argsort(f[perm], kind="stable")]
    weights = np.empty(n)
    weights[order] = np.arange(n, 0, -1, dtype=np.float64)

    edges = np.cumsum(weights)
    spacing = edges[-1] / 2.0
    offset = rng.uniform(0.0, spacing)
    picks = np.searchsorted(edges, [offset, offset + spacing], side="right")
    a, b = int(picks[0]), int(picks[1])
    if f[a] < f[b]:
        return b, a
    return a, b


def crossover_heuristic(
    p1: Sequence[float],
    p2: Sequence[float],
    beta: float,
    r: Restrictions | None = None,
) -> np.ndarray:
    """Blend child = p2 + beta * (p1 - p2), clamped to the box when given.

    The caller passes the fitter parent as p2; beta measures how far the
    child stands from it (0 reproduces p2, 1 reproduces p1).
    """
    a = np.asarray(p1, dtype=np.float64)
    b = np.asarray(p2, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch(
            f"parents must be equal-length vectors, got {a.shape} and {b.shape}"
        )
    child = b + beta * (a - b)
    if r is not None:
        if a.size != r.size:
            raise DimensionMismatch(
                f"parents have {a.size} genes, restrictions expect {r.size}"
            )
        child = r.clamp(child)
    return child


def mutate_adaptive(
    genes: Sequence[float],
    r: Restrictions,
    config: GaConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Multiplicative per-gene mutation that respects the box.

    Each gene mutates independently with config.mutation_probability; a
    mutated gene is multiplied by (1 + delta) with delta uniform in
    +-(mutation_scale * gene span), then clamped.  Degenerate genes
    (lower == upper) therefore never move.
    """
    g = np.asarray(genes, dtype=np.float64)
    if g.size != r.size:
        raise DimensionMismatch(
            f"genome has {g.size} genes, restrictions expect {r.size}"
        )
    # draw both vectors unconditionally so RNG use per call is fixed
    hits = rng.uniform(0.0, 1.0, g.size) < config.mutation_probability
    scale = config.mutation_scale * r.span()
    delta = rng.uniform(-scale, scale)
    out = np.where(hits, g * (1.0 + delta), g)
    return r.clamp(out)


@dataclass(frozen=True)
class HistoryRow:
    """One line of the per-generation convergence record."""

    generation: int
    best: float
    mean: float
    evaluations: int


@dataclass
class GaResult:
    """Best individual found plus the full convergence history.

    Iterates as the (best_genome, best_fitness, history) triple for
    callers that only want the answer.
    """

    best_genome: np.ndarray
    best_fitness: float
    history: list[HistoryRow]
    stopped_by: str
    generations: int
    evaluations: int
    runtime_s: float

    def __iter__(self) -> Iterator:
        return iter((self.best_genome, self.best_fitness, self.history))


def export_history(history: Sequence[HistoryRow], path: str | Path) -> None:
    """Write the convergence record as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "best", "mean", "evaluations"])
        for row in history:
            writer.writerow(
                [row.generation, repr(row.best), repr(row.mean), row.evaluations]
            )


def run_ga(
    fitness: Callable[[np.ndarray], float] | Callable[[np.ndarray], np.ndarray],
    r: Restrictions,
    config: GaConfig | None = None,
    *,
    vectorized: bool = False,
) -> GaResult:
    """Minimize fitness over the box using the full evolutionary loop.

    One generation evaluates every individual, then breeds a full
    replacement population through selection, crossover, and mutation;
    elitism copies the best individual seen so far into slot 0, which
    keeps the best-fitness history non-increasing.  With vectorized=True
    the fitness callable receives the whole genome matrix at once and
    must return one value per row; evaluations stay pure either way, so
    only the breeding loop consumes the master RNG.

    Stops on whichever criterion fires first: fitness_target reached,
    max_iterations bred, stall_generations without improvement, or the
    wall-clock budget exhausted.
    """
    cfg = config if config is not None else GaConfig()
    rng = np.random.default_rng(cfg.seed)
    started = time.monotonic()

    pop = init_population(r, cfg.pop_size, rng)
    evaluations = 0
    history: list[HistoryRow] = []

    def evaluate(genomes: np.ndarray) -> np.ndarray:
        nonlocal evaluations
        if vectorized:
            values = np.asarray(fitness(genomes), dtype=np.float64)
            if values.shape != (genomes.shape[0],):
                raise DimensionMismatch(
                    f"vectorized fitness returned shape {values.shape}, "
                    f"expected ({genomes.shape[0]},)"
                )
        else:
            values = np.array(
                [float(fitness(g)) for g in genomes], dtype=np.float64
            )
        evaluations += genomes.shape[0]
        bad = ~np.isfinite(values)
        if bad.any():
            raise FitnessNonFinite(genomes[int(np.argmax(bad))].copy())
        return values

    pop.fitness = evaluate(pop.genomes)
    best_idx = int(np.argmin(pop.fitness))
    best_genome = pop.genomes[best_idx].copy()
    best_fitness = float(pop.fitness[best_idx])
    history.append(
        HistoryRow(0, best_fitness, float(pop.fitness.mean()), evaluations)
    )

    stalled = 0
    stopped_by = "max_iterations"
    generation = 0
    while True:
        if cfg.fitness_target is not None and best_fitness <= cfg.fitness_target:
            stopped_by = "fitness_target"
            break
        if generation >= cfg.max_iterations:
            stopped_by = "max_iterations"
            break
        if stalled >= cfg.stall_generations:
            stopped_by = "stall"
            break
        if (
            cfg.time_budget_s is not None
            and time.monotonic() - started >= cfg.time_budget_s
        ):
            stopped_by = "time_budget"
            break

        children = np.empty_like(pop.genomes)
        for j in range(cfg.pop_size):
            i1, i2 = select_parents_su(pop.fitness, rng)
            child = crossover_heuristic(
                pop.genomes[i1], pop.genomes[i2], cfg.beta, r
            )
            children[j] = mutate_adaptive(child, r, cfg, rng)
        children[0] = best_genome

        generation += 1
        pop = Population(genomes=children, generation=generation)
        pop.fitness = evaluate(pop.genomes)
        gen_best = int(np.argmin(pop.fitness))
        if float(pop.fitness[gen_best]) < best_fitness:
            best_fitness = float(pop.fitness[gen_best])
            best_genome = pop.genomes[gen_best].copy()
            stalled = 0
        else:
            stalled += 1
        history.append(
            HistoryRow(
                generation, best_fitness, float(pop.fitness.mean()), evaluations
            )
        )

    return GaResult(
        best_genome=best_genome,
        best_fitness=best_fitness,
        history=history,
        stopped_by=stopped_by,
        generations=generation,
        evaluations=evaluations,
        runtime_s=time.monotonic() - started,
    )
