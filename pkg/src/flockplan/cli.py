"""Batch entry points: corpus generation, training, search, and serving.

Commands print human-readable progress on stdout and, on failure, exactly
one JSON object on stderr (``{"error": ..., "message": ...}``) with a
non-zero exit code, so shell pipelines can branch on failures without
scraping prose.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .condosim import CondoConfig, Condominium, run_condominium
from .dataset import (
    GeneratorConfig,
    generate_corpus,
    load_samples,
    partition_weeks,
    store_samples,
)
from .domain import fcr_normalized
from .errors import ConfigDomain, FlockPlanError, ParseError
from .evolve import Restrictions
from .planner import (
    PLANNER_GA,
    climate_grid_steps,
    corpus_restrictions,
    benchmark_random_specialists,
    exhaustive_oracle,
    fitness_week6,
    optimize_flock,
    plan_from_json,
    plan_to_csv,
    plan_to_json,
    rollout_progressive,
)
from .surrogate import (
    PRODUCTION_HP,
    evaluate_r2,
    load_week_models,
    save_week_models,
    train_corpus_models,
)


def _fail(error: str, message: str) -> None:
    click.echo(json.dumps({"error": error, "message": message}), err=True)
    sys.exit(1)


def _guarded(fn):
    """Map anticipated failures to the one-line stderr JSON contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FlockPlanError as exc:
            _fail(type(exc).__name__, str(exc))
        except FileNotFoundError as exc:
            _fail("MissingInput", str(exc.filename or exc))
        except OSError as exc:
            _fail("IoError", str(exc))
        except (ValueError, KeyError) as exc:
            _fail(type(exc).__name__, str(exc))

    return wrapper


def _parse_endpoint(text: str) -> tuple[str, int]:
    """Accept ':8070', 'host:8070', or a bare port number."""
    host, _, port = text.rpartition(":")
    if not port.isdigit():
        raise ParseError(f"endpoint {text!r} is not host:port")
    return host or "127.0.0.1", int(port)


def _load_models(directory: str):
    models = load_week_models(directory)
    if not models:
        raise FileNotFoundError(
            f"no week models in {directory}; run `flockplan train` first"
        )
    return models


def _restrictions_for(models, samples_path: str | None):
    """Search boxes from a corpus, or from the models' own scaling envelopes.

    Corpus boxes are clipped into each model's envelope: the models refuse
    to extrapolate, so a box reaching past what they were fitted on would
    only produce rejected genomes.
    """
    if samples_path is None:
        return tuple(Restrictions(m.bounds.mini, m.bounds.maxi) for m in models)
    clipped = []
    for model, box in zip(models, corpus_restrictions(load_samples(samples_path))):
        lower = np.maximum(box.lower, model.bounds.mini)
        upper = np.minimum(box.upper, model.bounds.maxi)
        if (lower > upper).any():
            bad = int(np.argmax(lower > upper))
            raise ConfigDomain(
                f"week {model.week_index}: corpus box misses the model "
                f"envelope at gene {bad}"
            )
        clipped.append(Restrictions(lower, upper))
    return tuple(clipped)


@click.group()
@click.version_option(package_name="flockplan")
def main():
    """Weekly flock surrogates, reverse-week search, and farm services."""


# --- data -------------------------------------------------------------------

@main.command("gen-data")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Generator config JSON; defaults built in.")
@click.option("--flocks", type=click.IntRange(min=1), default=None,
              help="Override the number of flocks.")
@click.option("--seed", type=int, default=None, help="Override the corpus seed.")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False, writable=True))
@_guarded
def gen_data(config_path, flocks, seed, out_path):
    """Generate a deterministic corpus of reared flocks."""
    if config_path is not None:
        cfg = GeneratorConfig.from_json(Path(config_path).read_text())
    else:
        cfg = GeneratorConfig()
    if flocks is not None:
        cfg = replace(cfg, n_flocks=flocks)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    samples = generate_corpus(cfg)
    out = Path(out_path)
    store_samples(samples, out)
    recorded = out.with_suffix(".config.json")
    recorded.write_text(cfg.to_json())
    click.echo(f"{len(samples)} flocks -> {out}")
    click.echo(f"resolved config -> {recorded}")


# --- training ---------------------------------------------------------------

@main.command()
@click.option("--samples", "samples_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, show_default=True,
              help="Offset added to every week's training seed.")
@click.option("--epochs", type=click.IntRange(min=1), default=None,
              help="Override the per-week epoch count (desk-scale runs).")
@click.option("--holdout", type=click.IntRange(min=0), default=2, show_default=True,
              help="Trailing flocks kept out of training for the fit report.")
@_guarded
def train(samples_path, out_dir, seed, epochs, holdout):
    """Train the six weekly models and write them with a fit report."""
    samples = load_samples(samples_path)
    if holdout >= len(samples):
        raise ValueError(
            f"holdout {holdout} leaves no training flocks out of {len(samples)}"
        )
    train_set = samples[:-holdout] if holdout else samples
    test_set = samples[-holdout:] if holdout else samples

    profiles = []
    for hp in PRODUCTION_HP:
        hp = replace(hp, seed=hp.seed + seed)
        if epochs is not None:
            hp = replace(hp, epochs=epochs)
        profiles.append(hp)

    started = time.monotonic()
    models = train_corpus_models(train_set, tuple(profiles))
    elapsed = time.monotonic() - started

    out = Path(out_dir)
    save_week_models(models, out)
    scored_on = "holdout" if holdout else "train"
    weekly_test = partition_weeks(test_set)
    rows = [(m.week_index, *evaluate_r2(m, weekly_test[m.week_index - 1]))
            for m in models]
    with (out / "r2.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["week", "mdw", "dfcpb", "nlbpa", "scored_on"])
        for week, *r2 in rows:
            writer.writerow([week, *(f"{v:.6f}" for v in r2), scored_on])

    for week, *r2 in rows:
        click.echo(f"week {week}: R2 mdw={r2[0]:.4f} dfcpb={r2[1]:.4f} "
                   f"nlbpa={r2[2]:.4f} ({scored_on})")
    click.echo(f"{len(models)} models -> {out} ({elapsed:.1f}s, "
               f"{len(train_set)} training flocks)")


# --- search -----------------------------------------------------------------

def _ga_config(seed, pop_size, max_iterations, stall, time_budget_s):
    cfg = PLANNER_GA
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if pop_size is not None:
        cfg = replace(cfg, pop_size=pop_size)
    if max_iterations is not None:
        cfg = replace(cfg, max_iterations=max_iterations)
    if stall is not None:
        cfg = replace(cfg, stall_generations=stall)
    if time_budget_s is not None:
        cfg = replace(cfg, time_budget_s=time_budget_s)
    return cfg


@main.command()
@click.option("--models", "models_dir", required=True, type=click.Path(file_okay=False))
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False, writable=True))
@click.option("--report", "report_path", type=click.Path(dir_okay=False, writable=True),
              default=None, help="Search report path (default: report.json beside --out).")
@click.option("--samples", "samples_path", type=click.Path(exists=True, dir_okay=False),
              default=None,
              help="Corpus for the search boxes; without it the models' scaling envelopes are used.")
@click.option("--seed", type=int, default=None)
@click.option("--pop-size", type=click.IntRange(min=1), default=None)
@click.option("--max-iterations", type=click.IntRange(min=1), default=None)
@click.option("--stall-generations", "stall", type=click.IntRange(min=1), default=None)
@click.option("--time-budget-s", type=float, default=None)
@_guarded
def optimize(models_dir, out_path, report_path, samples_path, seed, pop_size,
             max_iterations, stall, time_budget_s):
    """Search a full 40-day plan in reverse week order."""
    models = _load_models(models_dir)
    restrictions = _restrictions_for(models, samples_path)
    cfg = _ga_config(seed, pop_size, max_iterations, stall, time_budget_s)

    plan, i_c, report = optimize_flock(models, restrictions, cfg)
    _, trajectory = rollout_progressive(models, plan)

    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(plan_to_json(plan))
    csv_path = out.with_suffix(".csv")
    plan_to_csv(plan, csv_path)

    report_out = Path(report_path) if report_path else out.with_name("report.json")
    doc = {
        "schema_version": 1,
        "fcr_est": report.fcr_est,
        "fcr_res": report.fcr_res,
        "arrival": i_c.tolist(),
        "boundary_errors": [
            {"week": b.week, "absolute": b.absolute.tolist(),
             "relative": b.relative.tolist()}
            for b in report.boundary_errors
        ],
        "histories": {
            str(w): [
                {"generation": r.generation, "best": r.best,
                 "mean": r.mean, "evaluations": r.evaluations}
                for r in rows
            ]
            for w, rows in report.histories.items()
        },
        "stopped_by": {str(w): s for w, s in report.stopped_by.items()},
        "runtimes": {str(w): round(t, 3) for w, t in report.runtimes.items()},
        "plan": json.loads(plan_to_json(plan)),
        "trajectory": trajectory.tolist(),
    }
    report_out.write_text(json.dumps(doc, indent=2))

    worst = max(float(b.relative.max()) for b in report.boundary_errors)
    click.echo(f"fcr_est={report.fcr_est:.4f} fcr_res={report.fcr_res:.4f}")
    click.echo(f"worst boundary error {worst * 100.0:.3f}%")
    for week in sorted(report.stopped_by):
        click.echo(f"week {week}: stopped by {report.stopped_by[week]} "
                   f"after {report.runtimes[week]:.1f}s")
    click.echo(f"plan -> {out} (+ {csv_path.name}), report -> {report_out}")


@main.command()
@click.option("--models", "models_dir", required=True, type=click.Path(file_okay=False))
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False, writable=True),
              default=None, help="Trajectory CSV (default: stdout).")
@_guarded
def rollout(models_dir, plan_path, out_path):
    """Chain a saved plan through the models and emit its daily trajectory."""
    models = _load_models(models_dir)
    plan = plan_from_json(Path(plan_path).read_text())
    fcr_res, trajectory = rollout_progressive(models, plan)

    def write_rows(fh):
        writer = csv.writer(fh)
        writer.writerow(["day", "mdw", "dfcpb", "nlbpa", "fcr"])
        for day, (mdw, dfcpb, nlbpa) in enumerate(trajectory, start=1):
            writer.writerow([day, f"{mdw:.3f}", f"{dfcpb:.5f}", f"{nlbpa:.4f}",
                             f"{fcr_normalized(dfcpb, nlbpa, mdw):.5f}"])

    if out_path is None:
        write_rows(sys.stdout)
    else:
        with open(out_path, "w", newline="") as fh:
            write_rows(fh)
        click.echo(f"fcr_res={fcr_res:.4f}, trajectory -> {out_path}")


@main.command()
@click.option("--models", "models_dir", required=True, type=click.Path(file_okay=False))
@click.option("--days", type=click.IntRange(min=1), default=2, show_default=True,
              help="Leading final-week days whose averages are searched.")
@click.option("--grid", default="0.5,1", show_default=True,
              help="Temperature,humidity grid steps.")
@click.option("--budget", type=click.IntRange(min=1), default=500_000,
              show_default=True, help="Refuse grids larger than this.")
@_guarded
def oracle(models_dir, days, grid, budget):
    """Exhaustively grid the final-week conversion objective.

    Only the average temperature and humidity of the first ``--days``
    days are searched; every other free gene is frozen at its box
    midpoint, which keeps the grid small enough to enumerate and gives
    a ground-truth baseline for the genetic search.
    """
    try:
        t_step, h_step = (float(v) for v in grid.split(","))
    except ValueError:
        raise ParseError(f"grid {grid!r} is not 't_step,h_step'") from None
    models = _load_models(models_dir)
    model = models[-1]
    if model.week_index != 6:
        raise ParseError(f"final model is week {model.week_index}, expected 6")
    if days > model.week_len:
        raise ValueError(f"--days {days} exceeds the final week ({model.week_len})")

    lower = model.bounds.mini.copy()
    upper = model.bounds.maxi.copy()
    searched = []
    for d in range(days):
        base = 0 if d == 0 else 10 + 7 * (d - 1)
        searched += [base + 2, base + 5]   # t_avg, h_avg of day d
    frozen = [i for i in range(lower.size) if i not in searched]
    mid = (lower[frozen] + upper[frozen]) / 2.0
    lower[frozen] = mid
    upper[frozen] = mid
    box = Restrictions(lower, upper)
    steps = climate_grid_steps(box, t_step=t_step, h_step=h_step)

    started = time.monotonic()
    result = exhaustive_oracle(
        lambda g: fitness_week6(g, model), box, steps, budget=budget
    )
    doc = {
        "objective": "final-week conversion",
        "days": days,
        "grid": [t_step, h_step],
        "searched_genes": searched,
        "evaluations": result.evaluations,
        "best_fitness": result.best_fitness,
        "best_genome": result.best_genome.tolist(),
        "runtime_s": round(time.monotonic() - started, 3),
    }
    click.echo(json.dumps(doc, indent=2))


@main.command()
@click.option("--models", "models_dir", required=True, type=click.Path(file_okay=False))
@click.option("--samples", "samples_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Corpus for the sampling boxes.")
@click.option("--n", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, writable=True),
              default=None, help="Write every sampled conversion as CSV.")
@_guarded
def benchmark(models_dir, samples_path, n, seed, out_path):
    """Roll out random feasible plans and summarize their conversions."""
    models = _load_models(models_dir)
    restrictions = _restrictions_for(models, samples_path)
    result = benchmark_random_specialists(models, restrictions, n=n, seed=seed)
    click.echo(f"n={n} best={result.best_fcr:.4f} "
               f"mean={result.mean:.4f} std={result.std:.4f}")
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fcr"])
            for value in result.fcrs:
                writer.writerow([f"{value:.5f}"])
        click.echo(f"{n} conversions -> {out_path}")


# --- services ---------------------------------------------------------------

@main.command()
@click.option("--condo", "condo_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--serve", "endpoint", default=":0", show_default=True,
              help="TCP endpoint for the house slaves.")
@click.option("--ticks", type=click.IntRange(min=1), default=None,
              help="Advance this many days, print a status line, and exit.")
@_guarded
def simulate(condo_path, endpoint, ticks):
    """Run a condominium of simulated houses behind a TCP endpoint."""
    config = CondoConfig.from_json(Path(condo_path).read_text())
    host, port = _parse_endpoint(endpoint)
    handle = run_condominium(config, host, port).start()
    try:
        bound_host, bound_port = handle.endpoint
        click.echo(json.dumps({
            "endpoint": f"{bound_host}:{bound_port}",
            "addresses": list(config.resolved_addresses()),
        }))
        if ticks is not None:
            for _ in range(ticks):
                handle.condo.tick()
            click.echo(json.dumps({
                "day": handle.condo.day,
                "houses": [
                    {"address": addr, "flock_id": house.flock_id,
                     "day": house.day, "finished": house.finished}
                    for addr, house in sorted(handle.condo.houses.items())
                ],
            }))
            return
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        handle.stop()


@main.command()
@click.option("--api", "endpoint", required=True, help="HTTP endpoint, e.g. :8070.")
@click.option("--condo", "condo_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--models", "models_dir", required=True, type=click.Path(file_okay=False))
@click.option("--samples", "samples_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--db", "db_path", default=":memory:", show_default=True,
              help="SQLite file backing the supervision store.")
@click.option("--error-threshold", type=float, default=0.05, show_default=True)
@click.option("--check", is_flag=True,
              help="Assemble the whole stack, print a summary, and exit.")
@_guarded
def serve(endpoint, condo_path, models_dir, samples_path, db_path,
          error_threshold, check):
    """Run the supervision HTTP service over an in-process condominium."""
    from .supervisor import Store, Supervisor, create_app

    host, port = _parse_endpoint(endpoint)
    config = CondoConfig.from_json(Path(condo_path).read_text())
    models = _load_models(models_dir)
    samples = load_samples(samples_path)
    restrictions = corpus_restrictions(samples)
    supervisor = Supervisor(
        Store(db_path),
        Condominium(config),
        models,
        samples,
        restrictions,
        trainer=train_corpus_models,
        error_threshold=error_threshold,
    )
    app = create_app(supervisor)
    if check:
        click.echo(json.dumps({
            "houses": config.n_houses,
            "models": len(models),
            "base_flocks": len(samples),
            "db": db_path,
        }))
        return
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")


# --- figures ----------------------------------------------------------------

@main.command()
@click.option("--report", "report_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--samples", "samples_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Corpus for the daily-band chart.")
@_guarded
def plot(report_path, out_dir, samples_path):
    """Render the recorded search report as static chart files."""
    from . import plots

    try:
        doc = json.loads(Path(report_path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"report is not valid JSON: {exc}") from None

    def section(key):
        try:
            return doc[key]
        except KeyError:
            raise ParseError(f"report has no {key!r} section") from None

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    written = [
        plots.save_convergence(section("histories"), out / "convergence.png"),
        plots.save_boundary_errors(section("boundary_errors"),
                                   out / "boundary-errors.png"),
        plots.save_action_plan(
            plan_from_json(json.dumps(section("plan"))).to_day_plans(),
            out / "action-plan.png"),
        plots.save_trajectory(np.asarray(section("trajectory")),
                              out / "trajectory.png"),
    ]
    if samples_path is not None:
        written.append(plots.save_corpus_bands(load_samples(samples_path),
                                               out / "corpus-bands.png"))
    for path in written:
        click.echo(f"figure -> {path}")


if __name__ == "__main__":
    main()
