"""Whole-stack guarantees at production scale, one verdict line per check.

Twelve checks: conversion arithmetic, scaling, recurrent gradients,
held-out fit, search-vs-exhaustive optimality, weekly stitching, the
estimate/realization gap, plan dominance, operator exactness, wire
robustness, the supervised rearing loop, and the adaptation policy.
The expensive fixtures (full-budget training, the production search)
are built once and shared module-wide.
"""

import threading
from dataclasses import replace

import numpy as np
import pytest
from fastapi.testclient import TestClient

from flockplan.condosim import CondoConfig, Condominium
from flockplan.dataset import (
    GeneratorConfig,
    comfort_plan,
    comfort_plans,
    generate_corpus,
    generate_flock,
    partition_weeks,
)
from flockplan.domain import Bounds, fcr_basic, fcr_normalized, minmax_denorm, minmax_norm
from flockplan.errors import CrcMismatch, Oversize, ProtocolViolation, Truncated
from flockplan.evolve import (
    GaConfig,
    Restrictions,
    crossover_heuristic,
    mutate_adaptive,
    run_ga,
)
from flockplan.planner import (
    benchmark_random_specialists,
    climate_grid_steps,
    corpus_restrictions,
    exhaustive_oracle,
    fitness_week6,
    flock_to_plan,
    optimize_flock,
    rollout_progressive,
)
from flockplan.protocol import (
    REPORT_STATUS,
    WRITE_DAY_PLAN,
    Frame,
    Master,
    decode_frame,
    encode_day_plan,
    encode_frame,
)
from flockplan.supervisor import Store, Supervisor, adaptive_cycle, create_app
from flockplan.surrogate import (
    Hyperparams,
    _all_tensors,
    _init_model,
    evaluate_r2,
    train_corpus_models,
    training_loss_and_grads,
)


def verdict(ok: bool, line: str) -> None:
    print(("[PASS] " if ok else "[FAIL] ") + line)
    assert ok, line


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(GeneratorConfig())


@pytest.fixture(scope="module")
def models(corpus):
    """Full-budget training on the first ten flocks (about four minutes)."""
    return train_corpus_models(corpus[:10])


@pytest.fixture(scope="module")
def boxes(corpus):
    return corpus_restrictions(corpus[:10])


@pytest.fixture(scope="module")
def production_run(models, boxes):
    """The full reverse-week search at the tuned operating point."""
    plan, i_c, report = optimize_flock(models, boxes)
    return plan, i_c, report


def test_conversion_identity_over_random_triples():
    rng = np.random.default_rng(2026)
    dfcpb = rng.uniform(0.1, 10.0, 10_000)
    nlbpa = rng.uniform(0.5, 30.0, 10_000)
    mdw = rng.uniform(40.0, 4000.0, 10_000)
    nlb = rng.integers(1, 35_000, 10_000)

    worst = 0.0
    for a, b, c, n in zip(dfcpb, nlbpa, mdw, nlb):
        direct = 1000.0 * a / c
        worst = max(worst, abs(fcr_normalized(a, b, c) - direct) / direct)
        # house-total route: per-bird feed scaled up must give the same rate
        worst = max(worst, abs(fcr_basic(a * n, n, c) - direct) / direct)
    verdict(worst <= 1e-12,
            f"conversion identity: worst relative error {worst:.2e} <= 1e-12")


def test_scaling_roundtrip_and_worked_example():
    rng = np.random.default_rng(7)
    mini = rng.uniform(-50.0, 50.0, (10_000, 8))
    span = rng.uniform(0.1, 10.0, (10_000, 8))
    maxi = mini + span
    values = mini + rng.uniform(0.0, 1.0, (10_000, 8)) * span
    back = minmax_denorm(minmax_norm(values, maxi, mini), maxi, mini)
    worst = float(np.abs(back - values).max())
    example = float(minmax_norm(np.array([24.0]), np.array([28.0]),
                                np.array([23.0]))[0])
    verdict(worst <= 1e-12 and example == 0.2,
            f"scaling: roundtrip worst {worst:.2e} <= 1e-12, "
            f"(24-23)/(28-23) = {example} exactly")


def test_recurrent_gradients_match_finite_differences():
    length = 7 * 2 + 3
    model = _init_model(0, 2, Bounds(np.zeros(length), np.ones(length)),
                        Hyperparams(hidden_layers=2, hidden_size=2, seed=3))
    rng = np.random.default_rng(17)
    vn = rng.uniform(0.1, 0.9, (3, model.input_length))
    tn = rng.uniform(0.2, 0.8, (3, 6))
    _, grads = training_loss_and_grads(model, vn, tn, 0.01, None, None, None)

    worst, checked = 0.0, 0
    for name, arr in _all_tensors(model):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            orig, eps = arr[ix], 1e-5
            arr[ix] = orig + eps
            lp, _ = training_loss_and_grads(model, vn, tn, 0.01, None, None, None)
            arr[ix] = orig - eps
            lm, _ = training_loss_and_grads(model, vn, tn, 0.01, None, None, None)
            arr[ix] = orig
            num = (lp - lm) / (2 * eps)
            ana = grads[name][ix]
            worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), 1e-8))
            checked += 1
    verdict(worst < 1e-4,
            f"gradients: {checked} parameters, worst relative "
            f"deviation {worst:.2e} < 1e-4")


def test_heldout_fit_meets_floor_every_week(corpus, models):
    heldout = partition_weeks(corpus[10:])
    rows = [(m.week_index, *evaluate_r2(m, heldout[m.week_index - 1]))
            for m in models]
    min_mdw = min(r[1] for r in rows)
    min_dfcpb = min(r[2] for r in rows)
    min_nlbpa = min(r[3] for r in rows)
    verdict(min_mdw >= 0.95 and min_dfcpb >= 0.95 and min_nlbpa >= 0.80,
            f"held-out fit: min R2 mdw={min_mdw:.4f} dfcpb={min_dfcpb:.4f} "
            f"(floors 0.95), nlbpa={min_nlbpa:.4f} (floor 0.80)")


def test_search_matches_exhaustive_reference_on_small_instances(models):
    m6 = models[-1]

    def frozen_box(searched):
        lo, hi = m6.bounds.mini.copy(), m6.bounds.maxi.copy()
        rest = [i for i in range(lo.size) if i not in searched]
        mid = (lo[rest] + hi[rest]) / 2.0
        lo[rest] = mid
        hi[rest] = mid
        return Restrictions(lo, hi)

    instances = {
        "one day, temperature": [2],
        "one day, temperature+humidity": [2, 5],
        "two days, temperatures": [2, 12],
    }
    worst = 0.0
    for searched in instances.values():
        box = frozen_box(searched)
        steps = climate_grid_steps(box, t_step=0.5, h_step=1.0)
        reference = exhaustive_oracle(lambda g: fitness_week6(g, m6), box, steps)
        for seed in range(5):
            found = run_ga(lambda g: fitness_week6(g, m6), box,
                           GaConfig(pop_size=40, max_iterations=200,
                                    stall_generations=50, seed=seed))
            rel = abs(found.best_fitness - reference.best_fitness) \
                / reference.best_fitness
            worst = max(worst, rel)
    verdict(worst <= 0.01,
            f"search vs exhaustive: 3 instances x 5 seeds, worst gap "
            f"{worst * 100:.4f}% <= 1%")


def test_weekly_stitching_stays_tight(production_run):
    _, _, report = production_run
    worst = max(float(b.relative.max()) for b in report.boundary_errors)
    verdict(worst <= 0.025,
            f"stitching: worst boundary error {worst * 100:.4f}% <= 2.5% "
            f"across all five boundaries")


def test_estimate_matches_realization(production_run):
    _, _, report = production_run
    gap = abs(report.fcr_res - report.fcr_est) / report.fcr_est
    verdict(gap <= 0.005,
            f"estimate gap: fcr_est={report.fcr_est:.6f} "
            f"fcr_res={report.fcr_res:.6f}, gap {gap * 100:.4f}% <= 0.5%")


def test_searched_plan_dominates_references(corpus, models, boxes, production_run):
    plan, _, report = production_run
    bench = benchmark_random_specialists(models, boxes, n=1000, seed=11)

    cfg = GeneratorConfig()
    quiet = replace(cfg, growth_noise=0.0, feed_noise=0.0)
    guide = generate_flock(quiet, plans=comfort_plans(cfg), flock_id=990)
    m40 = guide.outcome_matrix()[-1]
    ground_truth = fcr_normalized(m40[1], m40[2], m40[0])
    guide_fcr, _ = rollout_progressive(models, flock_to_plan(guide))
    truth_gap = abs(report.fcr_res - ground_truth) / ground_truth

    verdict(report.fcr_res <= bench.best_fcr
            and report.fcr_res <= guide_fcr
            and truth_gap <= 0.03,
            f"dominance: fcr_res={report.fcr_res:.6f} <= best of 1000 random "
            f"({bench.best_fcr:.6f}) and <= guide plan ({guide_fcr:.6f}); "
            f"{truth_gap * 100:.3f}% from the simulator optimum (<= 3%)")


def test_operator_exactness_and_feasibility():
    rng = np.random.default_rng(12)

    # blend crossover is exact arithmetic when no box clamps it
    exact = True
    for _ in range(1000):
        p1 = rng.uniform(-10.0, 10.0, 12)
        p2 = rng.uniform(-10.0, 10.0, 12)
        for beta in (0.0, 0.6, 1.0):
            child = crossover_heuristic(p1, p2, beta)
            exact = exact and np.array_equal(child, p2 + beta * (p1 - p2))

    # adaptive mutation never leaves the box, degenerate genes never move
    lower = rng.uniform(-5.0, 5.0, 12)
    upper = lower + rng.uniform(0.0, 3.0, 12)
    upper[3] = lower[3]
    upper[9] = lower[9]
    box = Restrictions(lower, upper)
    cfg = GaConfig(mutation_probability=0.5, mutation_scale=0.05)
    genome = lower + (upper - lower) * rng.uniform(0.0, 1.0, 12)
    mutated, violations = 0, 0
    while mutated < 100_000:
        out = mutate_adaptive(genome, box, cfg, rng)
        violations += int(np.sum((out < lower) | (out > upper)))
        violations += int(out[3] != lower[3]) + int(out[9] != lower[9])
        mutated += int(np.sum(out != genome))
        genome = out

    # elitism: the best-so-far curve cannot rise
    sphere_box = Restrictions(np.full(5, -5.0), np.full(5, 5.0))
    monotone = True
    for seed in range(5):
        res = run_ga(lambda g: float(np.sum((g - 1.3) ** 2)), sphere_box,
                     GaConfig(pop_size=30, max_iterations=60,
                              stall_generations=60, seed=seed))
        best = np.array([row.best for row in res.history])
        monotone = monotone and bool(np.all(np.diff(best) <= 0.0))

    verdict(exact and violations == 0 and monotone,
            f"operators: blend exact for beta 0/0.6/1; {mutated} mutated genes, "
            f"{violations} box violations; elitist curve monotone on 5 seeds")


def test_wire_robustness_and_idempotency():
    reference = Frame(9, WRITE_DAY_PLAN, b"\x10\x20\x30")
    raw = encode_frame(reference)
    identity = decode_frame(raw) == reference

    undetected = 0
    for byte_pos in range(len(raw)):
        for bit in range(8):
            mutated = bytearray(raw)
            mutated[byte_pos] ^= 1 << bit
            try:
                decode_frame(bytes(mutated))
                undetected += 1
            except (CrcMismatch, Truncated, Oversize, ProtocolViolation):
                pass

    condo = Condominium(CondoConfig(n_houses=1, noisy=False))
    house = condo.houses[1]
    master = Master(condo.exchange)
    write = Frame(1, WRITE_DAY_PLAN,
                  encode_day_plan(house.flock_id, comfort_plan(GeneratorConfig(), 1)))
    first = master.transact(write)
    second = master.transact(write)
    idempotent = first == second and len(house.pending) == 1

    threads = [
        threading.Thread(target=master.transact, args=(Frame(1, REPORT_STATUS),))
        for _ in range(6)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    depth, overlapped = 0, False
    for event in master.events:
        if event.kind == "begin":
            depth += 1
            overlapped = overlapped or depth > 1
        elif event.kind == "end":
            depth -= 1

    verdict(identity and undetected == 0 and idempotent and not overlapped,
            f"wire: decode(encode) identity; {8 * len(raw)} single-bit flips "
            f"all detected; duplicate plan write acked once; "
            f"{sum(e.kind == 'begin' for e in master.events)} transactions "
            f"never overlapped")


def test_supervised_rearing_matches_prediction(corpus, models, boxes,
                                               production_run):
    plan, _, report = production_run
    condo = Condominium(CondoConfig(n_houses=3))
    supervisor = Supervisor(Store(), condo, models, list(corpus), boxes)
    supervisor.set_current_plan(plan, "pipeline")
    client = TestClient(create_app(supervisor))
    assert len(client.get("/api/v1/houses").json()) == 3

    for _ in range(40):
        supervisor.advance_day()

    finished = supervisor.completed_samples()
    audits = supervisor.store.plan_audit()
    per_house = {addr: sum(1 for r in audits if r["house"] == addr and r["ok"])
                 for addr in (1, 2, 3)}
    devs = []
    for sample in finished:
        m40 = sample.outcome_matrix()[-1]
        fcr = fcr_normalized(m40[1], m40[2], m40[0])
        devs.append(abs(fcr - report.fcr_res) / report.fcr_res)
    http_report = client.get("/api/v1/flocks/1000/report")

    verdict(len(finished) == 3
            and all(n == 40 for n in per_house.values())
            and all(d <= 0.05 for d in devs)
            and http_report.status_code == 200
            and len(http_report.json()["series"]) == 40,
            f"supervised rearing: 3 houses x 40 distributed day plans, "
            f"measured conversion within "
            f"{max(devs) * 100:.3f}% of fcr_res (<= 5%)")


def test_adaptation_policy_decisions(corpus, models):
    cfg = GeneratorConfig()

    fresh = [generate_flock(cfg, flock_id=200 + i) for i in range(2)]
    keep = adaptive_cycle(fresh, corpus, models)

    shifted_cfg = replace(cfg, comfort_t=tuple(t + 2.0 for t in cfg.comfort_t))
    drifted = []
    for i in range(3):
        donor = generate_flock(cfg, flock_id=100 + i)
        drifted.append(generate_flock(shifted_cfg, plans=donor.plans,
                                      flock_id=100 + i))
    retrain = adaptive_cycle(drifted, corpus, models)

    sick = generate_flock(cfg, flock_id=7777)
    area = sick.house.area_m2
    outs, nlb = [], sick.initial_birds
    for day, o in enumerate(sick.outcomes, start=1):
        dm = min(o.dm * 20 if 12 <= day <= 20 else o.dm, nlb)
        nlb -= dm
        outs.append(replace(o, dm=dm, nlb=nlb, nlbpa=nlb / area,
                            dmpa=dm / area,
                            dfcpb=o.dfc / nlb if nlb else 0.0))
    burst = replace(sick, outcomes=tuple(outs))
    screened = adaptive_cycle([burst] + fresh, corpus, models)

    errors_pct = np.round(retrain.errors * 100.0, 2)
    verdict(keep.action == "keep" and keep.accepted == (200, 201)
            and retrain.action == "retrain"
            and retrain.accepted == (100, 101, 102)
            and len(retrain.dataset) == len(corpus) + 3
            and screened.rejected == (7777,)
            and screened.accepted == (200, 201),
            f"adaptation: keep with 2/{keep.needed} flocks; retrain under a "
            f"+2C comfort shift at channel errors {errors_pct.tolist()}% "
            f"(threshold 5%); mortality-burst flock rejected before counting")
