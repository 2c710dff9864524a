#!/usr/bin/env python3
"""Record supervisor API responses as console test fixtures.

Runs the full desk-scale stack in process (simulated condominium, cheap
week models, the real HTTP app) and captures exact response envelopes
for the vitest suite.  Two passes: a healthy condominium for the main
flows, then one with a silent house at address 2 for the partial
distribution fixtures.  Every fixture is a real response; nothing here
is typed in by hand.

Usage: python3 scripts/record_fixtures.py  (from frontend/)
"""

import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from fastapi.testclient import TestClient

from flockplan.condosim import CondoConfig, Condominium
from flockplan.dataset import GeneratorConfig, generate_corpus
from flockplan.evolve import GaConfig
from flockplan.planner import corpus_restrictions
from flockplan.protocol import Master, decode_frame
from flockplan.supervisor import Store, Supervisor, create_app
from flockplan.surrogate import PRODUCTION_HP, train_corpus_models

FIXTURES = Path(__file__).resolve().parent.parent / "test" / "fixtures"

# small but real: enough epochs for sane surfaces, a GA that finishes in
# seconds, and a job thread slowed only by its own arithmetic
CHEAP_PROFILES = tuple(replace(hp, epochs=400) for hp in PRODUCTION_HP)
FAST_GA = GaConfig(
    pop_size=16,
    beta=0.6,
    mutation_probability=0.02,
    mutation_scale=0.01,
    stall_generations=15,
    max_iterations=40,
    seed=5,
)


def save(name: str, status: int, body) -> None:
    path = FIXTURES / f"{name}.json"
    path.write_text(json.dumps({"status": status, "body": body}, indent=2) + "\n")
    print(f"  {name}.json  ({status})")


def record(client: TestClient, name: str, method: str, url: str, body=None):
    response = client.post(url, json=body) if method == "POST" else client.get(url)
    save(name, response.status_code, response.json())
    return response.json()


def build_supervisor(condo_seed: int, drop_address: int | None = None):
    corpus = generate_corpus(GeneratorConfig(n_flocks=6, seed=41))[:5]
    models = train_corpus_models(corpus, CHEAP_PROFILES)
    boxes = corpus_restrictions(list(corpus))
    condo = Condominium(
        CondoConfig(
            n_houses=3,
            noisy=True,
            generator=GeneratorConfig(seed=condo_seed, n_flocks=3),
        )
    )
    supervisor = Supervisor(
        Store(), condo, models, list(corpus), boxes, ga_config=FAST_GA
    )
    if drop_address is not None:
        healthy = condo.exchange

        def lossy(raw: bytes, timeout: float | None = None):
            frame = decode_frame(raw)
            if frame.address == drop_address:
                return None
            return healthy(raw, timeout)

        supervisor.master = Master(lossy, retries=2, timeout=0.05)
    return supervisor


def poll_job(client: TestClient, job_id: str) -> list[dict]:
    """Every distinct (status, progress) snapshot until the job settles."""
    trace = []
    deadline = time.monotonic() + 120.0
    while time.monotonic() < deadline:
        response = client.get(f"/api/v1/jobs/{job_id}")
        doc = response.json()
        key = (doc["status"], doc["progress"])
        if not trace or (trace[-1]["body"]["status"], trace[-1]["body"]["progress"]) != key:
            trace.append({"status": response.status_code, "body": doc})
        if doc["status"] in ("done", "failed"):
            return trace
        time.sleep(0.02)
    raise RuntimeError(f"job {job_id} did not settle inside the deadline")


def record_healthy() -> None:
    print("healthy stack:")
    supervisor = build_supervisor(condo_seed=77)
    client = TestClient(create_app(supervisor))

    record(client, "plan_missing", "GET", "/api/v1/plan/current")
    for _ in range(5):
        supervisor.advance_day()
    houses_before = record(client, "houses_initial", "GET", "/api/v1/houses")
    for address in (1, 2, 3):
        record(
            client, f"telemetry_house{address}", "GET",
            f"/api/v1/houses/{address}/telemetry",
        )
    record(client, "alarms_initial", "GET", "/api/v1/alarms")

    # a real entry big enough to cross the daily-deaths alarm rule
    record(
        client, "mortality_receipt", "POST", "/api/v1/houses/1/mortality",
        {"day": 6, "count": 200, "operator": "console"},
    )
    record(
        client, "mortality_stale", "POST", "/api/v1/houses/1/mortality",
        {"day": 3, "count": 5, "operator": "console"},
    )
    supervisor.advance_day()
    houses_after = record(client, "houses_after_mortality", "GET", "/api/v1/houses")
    record(client, "alarms_after_mortality", "GET", "/api/v1/alarms")

    before = next(h["nlb"] for h in houses_before if h["address"] == 1)
    after = next(h["nlb"] for h in houses_after if h["address"] == 1)
    if after > before - 200:
        raise RuntimeError(f"mortality not visible: nlb {before} -> {after}")

    start = record(client, "optimize_start", "POST", "/api/v1/plan/optimize")
    trace = poll_job(client, start["job"])
    (FIXTURES / "job_trace.json").write_text(json.dumps(trace, indent=2) + "\n")
    print(f"  job_trace.json  ({len(trace)} snapshots, last "
          f"{trace[-1]['body']['status']})")
    if trace[-1]["body"]["status"] != "done":
        raise RuntimeError("optimize job failed during recording")
    record(client, "job_missing", "GET", "/api/v1/jobs/no-such-job")

    approval = record(
        client, "approve_ok", "POST", "/api/v1/plan/approve", {"job": start["job"]}
    )
    if not approval["distribution"]["all_ok"]:
        raise RuntimeError("healthy distribution was not all ok")
    record(client, "plan_current", "GET", "/api/v1/plan/current")

    for _ in range(4):
        supervisor.advance_day()
    flock_id = supervisor.condo.houses[1].flock_id
    record(client, "flock_report", "GET", f"/api/v1/flocks/{flock_id}/report")


def record_partial() -> None:
    print("stack with silent house 2:")
    supervisor = build_supervisor(condo_seed=78, drop_address=2)
    client = TestClient(create_app(supervisor))
    for _ in range(3):
        supervisor.advance_day()

    start = client.post("/api/v1/plan/optimize").json()
    trace = poll_job(client, start["job"])
    if trace[-1]["body"]["status"] != "done":
        raise RuntimeError("optimize job failed during partial recording")
    approval = record(
        client, "approve_partial", "POST", "/api/v1/plan/approve",
        {"job": start["job"]},
    )
    acks = {a["house"]: a["ok"] for a in approval["distribution"]["acks"]}
    if approval["distribution"]["all_ok"] or acks != {1: True, 2: False, 3: True}:
        raise RuntimeError(f"unexpected ack pattern: {acks}")
    record(client, "alarms_comms", "GET", "/api/v1/alarms")


def main() -> int:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    record_healthy()
    record_partial()
    print(f"done in {time.monotonic() - started:.1f}s -> {FIXTURES}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
