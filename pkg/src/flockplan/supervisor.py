"""Supervision service for a live condominium.

Persists flock history in an embedded relational store, distributes daily
plans through the protocol master, polls telemetry, raises alarms, runs
planner and retraining jobs in the background, and decides when the
surrogate models have drifted far enough from the houses to retrain.
The HTTP surface in :func:`create_app` exposes all of it under /api/v1.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
import sqlite3
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from pydantic import BaseModel, Field

from .condosim import Condominium
from .dataset import SCHEMA_VERSION, detect_outlier_flock
from .domain import FLOCK_DAYS, DayOutcome, DayPlan, FlockSample, HouseGeometry, fcr_basic
from .errors import NoActiveFlock, SlaveException, StaleDay, Timeout
from .planner import (
    FinalActionPlan,
    flock_to_plan,
    optimize_flock,
    plan_from_json,
    plan_to_json,
    rollout_progressive,
)
from .protocol import (
    READ_TELEMETRY,
    WRITE_DAY_PLAN,
    Frame,
    Master,
    Telemetry,
    decode_telemetry,
    encode_day_plan,
)
from .surrogate import WeekModel, train_corpus_models

log = logging.getLogger(__name__)

__all__ = [
    "AdaptiveDecision",
    "AlarmEvent",
    "AlarmRule",
    "DEFAULT_ALARM_RULES",
    "DistributionReport",
    "HouseAck",
    "Job",
    "JobRegistry",
    "Store",
    "Supervisor",
    "adaptive_cycle",
    "create_app",
    "evaluate_alarms",
    "prediction_error",
    "sample_from_doc",
    "sample_to_doc",
]


def utc_now() -> str:
    """Current time as an ISO-8601 UTC string, the format every row uses."""
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# --- flock sample codec -----------------------------------------------------

def sample_to_doc(sample: FlockSample) -> dict:
    """A completed flock as a JSON-ready document for the history store."""
    return {
        "schema_version": SCHEMA_VERSION,
        "flock_id": sample.flock_id,
        "house": {
            "length_m": sample.house.length_m,
            "width_m": sample.house.width_m,
            "capacity": sample.house.capacity,
        },
        "initial_birds": sample.initial_birds,
        "initial_conditions": list(sample.initial_conditions),
        "plans": [
            {
                "day": p.day,
                "t_min": p.t_min, "t_avg": p.t_avg, "t_max": p.t_max,
                "h_min": p.h_min, "h_avg": p.h_avg, "h_max": p.h_max,
            }
            for p in sample.plans
        ],
        "outcomes": [
            {
                "mdw": o.mdw, "dfcpb": o.dfcpb, "nlbpa": o.nlbpa,
                "dm": o.dm, "nlb": o.nlb, "dfc": o.dfc, "dmpa": o.dmpa,
            }
            for o in sample.outcomes
        ],
    }


def sample_from_doc(doc: Mapping) -> FlockSample:
    house = HouseGeometry(
        doc["house"]["length_m"], doc["house"]["width_m"], doc["house"]["capacity"]
    )
    plans = tuple(DayPlan(**p) for p in doc["plans"])
    outcomes = tuple(DayOutcome(**o) for o in doc["outcomes"])
    return FlockSample(
        house=house,
        initial_birds=doc["initial_birds"],
        plans=plans,
        outcomes=outcomes,
        initial_conditions=tuple(doc["initial_conditions"]),
        flock_id=doc["flock_id"],
    )


# --- persistence ------------------------------------------------------------

_SCHEMA = """
CREATE TABLE IF NOT EXISTS flocks (
    flock_id    INTEGER PRIMARY KEY,
    house       INTEGER NOT NULL,
    status      TEXT    NOT NULL,
    sample      TEXT,
    updated_at  TEXT    NOT NULL
);
CREATE TABLE IF NOT EXISTS telemetry (
    house       INTEGER NOT NULL,
    flock_id    INTEGER NOT NULL,
    day         INTEGER NOT NULL,
    t_min REAL, t_avg REAL, t_max REAL,
    h_min REAL, h_avg REAL, h_max REAL,
    mdw REAL, dfc REAL, dm INTEGER, nlb INTEGER,
    recorded_at TEXT NOT NULL,
    PRIMARY KEY (house, day)
);
CREATE TABLE IF NOT EXISTS mortality (
    id          INTEGER PRIMARY KEY AUTOINCREMENT,
    flock_id    INTEGER NOT NULL,
    house       INTEGER NOT NULL,
    day         INTEGER NOT NULL,
    count       INTEGER NOT NULL,
    operator    TEXT    NOT NULL,
    recorded_at TEXT    NOT NULL
);
CREATE TABLE IF NOT EXISTS plan_audit (
    id          INTEGER PRIMARY KEY AUTOINCREMENT,
    day         INTEGER NOT NULL,
    house       INTEGER NOT NULL,
    ok          INTEGER NOT NULL,
    retries     INTEGER NOT NULL,
    error       TEXT,
    sent_at     TEXT    NOT NULL
);
CREATE TABLE IF NOT EXISTS alarms (
    id          INTEGER PRIMARY KEY AUTOINCREMENT,
    at          TEXT    NOT NULL,
    house       INTEGER NOT NULL,
    variable    TEXT    NOT NULL,
    value       REAL    NOT NULL,
    rule_id     TEXT    NOT NULL,
    severity    TEXT    NOT NULL,
    message     TEXT    NOT NULL
);
CREATE TABLE IF NOT EXISTS meta (
    key         TEXT PRIMARY KEY,
    value       TEXT NOT NULL
);
"""


class Store:
    """Narrow persistence interface over an embedded sqlite database.

    Every mutating call commits before returning, so a service restart
    never loses a committed record.  The lock serializes access because
    one connection is shared across API handler threads.
    """

    def __init__(self, path: str | Path = ":memory:"):
        self.path = str(path)
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._lock = threading.RLock()
        with self._lock, self._conn:
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- flocks --------------------------------------------------------

    def upsert_flock(self, flock_id: int, house: int, status: str,
                     sample_doc: Mapping | None = None) -> None:
        doc = json.dumps(sample_doc) if sample_doc is not None else None
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO flocks (flock_id, house, status, sample, updated_at)"
                " VALUES (?, ?, ?, ?, ?)"
                " ON CONFLICT(flock_id) DO UPDATE SET"
                " house=excluded.house, status=excluded.status,"
                " sample=COALESCE(excluded.sample, flocks.sample),"
                " updated_at=excluded.updated_at",
                (flock_id, house, status, doc, utc_now()),
            )

    def flock(self, flock_id: int) -> dict | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM flocks WHERE flock_id = ?", (flock_id,)
            ).fetchone()
        return dict(row) if row else None

    def flocks(self, status: str | None = None) -> list[dict]:
        query, args = "SELECT * FROM flocks", ()
        if status is not None:
            query, args = query + " WHERE status = ?", (status,)
        with self._lock:
            rows = self._conn.execute(query + " ORDER BY flock_id", args).fetchall()
        return [dict(r) for r in rows]

    # -- telemetry -----------------------------------------------------

    def add_telemetry(self, house: int, flock_id: int, t: Telemetry) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO telemetry"
                " (house, flock_id, day, t_min, t_avg, t_max, h_min, h_avg,"
                "  h_max, mdw, dfc, dm, nlb, recorded_at)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (house, flock_id, t.day, t.t_min, t.t_avg, t.t_max,
                 t.h_min, t.h_avg, t.h_max, t.mdw, t.dfc, t.dm, t.nlb,
                 utc_now()),
            )

    def telemetry(self, house: int, day_from: int | None = None,
                  day_to: int | None = None) -> list[dict]:
        query = "SELECT * FROM telemetry WHERE house = ?"
        args: list = [house]
        if day_from is not None:
            query += " AND day >= ?"
            args.append(day_from)
        if day_to is not None:
            query += " AND day <= ?"
            args.append(day_to)
        with self._lock:
            rows = self._conn.execute(query + " ORDER BY day", args).fetchall()
        return [dict(r) for r in rows]

    def latest_telemetry(self, house: int) -> dict | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM telemetry WHERE house = ?"
                " ORDER BY day DESC LIMIT 1", (house,)
            ).fetchone()
        return dict(row) if row else None

    # -- mortality and audit -------------------------------------------

    def add_mortality(self, flock_id: int, house: int, day: int,
                      count: int, operator: str) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO mortality (flock_id, house, day, count, operator,"
                " recorded_at) VALUES (?, ?, ?, ?, ?, ?)",
                (flock_id, house, day, count, operator, utc_now()),
            )

    def mortality(self, flock_id: int) -> list[dict]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM mortality WHERE flock_id = ? ORDER BY id",
                (flock_id,),
            ).fetchall()
        return [dict(r) for r in rows]

    def add_plan_audit(self, day: int, entries: Iterable["HouseAck"]) -> None:
        now = utc_now()
        with self._lock, self._conn:
            self._conn.executemany(
                "INSERT INTO plan_audit (day, house, ok, retries, error, sent_at)"
                " VALUES (?, ?, ?, ?, ?, ?)",
                [(day, e.address, int(e.ok), e.retries, e.error, now)
                 for e in entries],
            )

    def plan_audit(self, day: int | None = None) -> list[dict]:
        query, args = "SELECT * FROM plan_audit", ()
        if day is not None:
            query, args = query + " WHERE day = ?", (day,)
        with self._lock:
            rows = self._conn.execute(query + " ORDER BY id", args).fetchall()
        return [dict(r) for r in rows]

    # -- alarms --------------------------------------------------------

    def add_alarms(self, events: Iterable["AlarmEvent"]) -> None:
        with self._lock, self._conn:
            self._conn.executemany(
                "INSERT INTO alarms (at, house, variable, value, rule_id,"
                " severity, message) VALUES (?, ?, ?, ?, ?, ?, ?)",
                [(e.at, e.house, e.variable, e.value, e.rule_id, e.severity,
                  e.message) for e in events],
            )

    def alarms(self, limit: int = 200) -> list[dict]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM alarms ORDER BY id DESC LIMIT ?", (limit,)
            ).fetchall()
        return [dict(r) for r in rows]

    # -- meta ----------------------------------------------------------

    def set_meta(self, key: str, value: str) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO meta (key, value) VALUES (?, ?)",
                (key, value),
            )

    def get_meta(self, key: str, default: str | None = None) -> str | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT value FROM meta WHERE key = ?", (key,)
            ).fetchone()
        return row["value"] if row else default


# --- alarms -----------------------------------------------------------------

@dataclass(frozen=True)
class AlarmRule:
    """Bounds check on one telemetry variable."""

    rule_id: str
    variable: str
    low: float | None = None
    high: float | None = None
    severity: str = "high"

    def __post_init__(self):
        if self.low is None and self.high is None:
            raise ValueError(f"rule {self.rule_id!r} has no bounds")
        if self.low is not None and self.high is not None and self.low >= self.high:
            raise ValueError(f"rule {self.rule_id!r} bounds are inverted")


@dataclass(frozen=True)
class AlarmEvent:
    at: str
    house: int
    variable: str
    value: float
    rule_id: str
    severity: str
    message: str


# The link rule backs communication failures flagged by plan distribution
# and telemetry polling; value 1.0 marks a failed exchange.
COMMS_RULE = AlarmRule("comms", "link", high=0.0, severity="high")

DEFAULT_ALARM_RULES: tuple[AlarmRule, ...] = (
    AlarmRule("t-max-high", "t_max", high=35.0, severity="high"),
    AlarmRule("t-min-low", "t_min", low=15.0, severity="warning"),
    AlarmRule("h-max-high", "h_max", high=95.0, severity="warning"),
    AlarmRule("dm-high", "dm", high=150.0, severity="warning"),
    COMMS_RULE,
)


def evaluate_alarms(
    snapshot: Mapping[int, Mapping[str, float]],
    rules: Sequence[AlarmRule],
    recent: Iterable[AlarmEvent] = (),
    window_s: float = 600.0,
    now: datetime | None = None,
) -> list[AlarmEvent]:
    """Check one telemetry snapshot against the rules.

    ``snapshot`` maps house address to its latest readings.  A violation
    already reported for the same house and rule within ``window_s`` is
    suppressed, so a condition that persists across polls raises once per
    window instead of once per read.
    """
    now = now or datetime.now(timezone.utc)
    fresh: set[tuple[int, str]] = set()
    for event in recent:
        at = datetime.fromisoformat(event.at)
        if (now - at).total_seconds() < window_s:
            fresh.add((event.house, event.rule_id))

    events = []
    for house in sorted(snapshot):
        row = snapshot[house]
        for rule in rules:
            value = row.get(rule.variable)
            if value is None or (house, rule.rule_id) in fresh:
                continue
            if rule.high is not None and value > rule.high:
                bound, direction = rule.high, "above"
            elif rule.low is not None and value < rule.low:
                bound, direction = rule.low, "below"
            else:
                continue
            events.append(AlarmEvent(
                at=now.isoformat(timespec="seconds"),
                house=house,
                variable=rule.variable,
                value=float(value),
                rule_id=rule.rule_id,
                severity=rule.severity,
                message=(f"house {house}: {rule.variable}={value:g} "
                         f"{direction} {bound:g}"),
            ))
            fresh.add((house, rule.rule_id))
    return events


# --- adaptive retraining ----------------------------------------------------

def prediction_error(models: Sequence[WeekModel], sample: FlockSample) -> np.ndarray:
    """Relative error of the chained prediction against one recorded flock.

    Returns one value per output channel (MdW, dFCpB, NlBpA): the absolute
    relative error averaged over all 40 days.  Chaining matters here; the
    models are compared exactly as the planner consumes them, so a drift
    that compounds across week boundaries shows at full size instead of
    being diluted by re-anchoring each week on observed values.
    """
    _, predicted = rollout_progressive(models, flock_to_plan(sample))
    observed = sample.outcome_matrix()
    return (np.abs(predicted - observed) / np.abs(observed)).mean(axis=0)


@dataclass(frozen=True)
class AdaptiveDecision:
    """Outcome of one adaptive-cycle evaluation."""

    action: str                      # "keep" or "retrain"
    accepted: tuple[int, ...]        # flock ids that passed the outlier filter
    rejected: tuple[int, ...]        # flock ids the filter discarded
    needed: int                      # accepted count required to evaluate
    errors: np.ndarray | None        # per-channel error, None below the gate
    threshold: float
    dataset: list[FlockSample] | None = None   # base plus accepted, on retrain


def adaptive_cycle(
    history: Sequence[FlockSample],
    base: Sequence[FlockSample],
    models: Sequence[WeekModel],
    *,
    min_fraction: float = 0.25,
    error_threshold: float = 0.05,
    outlier_z: float = 12.0,
    outlier_days: int = 5,
) -> AdaptiveDecision:
    """Decide whether the surrogates still match the live houses.

    New completed flocks are first screened against the training corpus;
    flocks with abnormal mortality never count toward the refresh quota.
    The screen runs at catastrophe scale (``outlier_z``), far looser than
    the screening function's own default: a disease burst sits at 15+
    standard deviations while a systematic climate-response drift peaks
    near 11, and the drift must survive the filter so the error check can
    see it.  Once at least ``min_fraction`` of the base size has
    accumulated, every accepted flock is rolled through the chained
    models and the mean relative error per output channel is compared
    against the threshold.  Any channel drifting past it triggers a
    retrain on base plus the accepted samples.
    """
    base = list(base)
    if not base:
        raise ValueError("adaptive cycle needs a non-empty base dataset")
    accepted, rejected = [], []
    for sample in history:
        verdict = detect_outlier_flock(
            sample, base, threshold=outlier_z, min_days=outlier_days
        )
        (rejected if verdict.reject else accepted).append(sample)

    needed = math.ceil(min_fraction * len(base))
    decision = dict(
        accepted=tuple(s.flock_id for s in accepted),
        rejected=tuple(s.flock_id for s in rejected),
        needed=needed,
        threshold=error_threshold,
    )
    if len(accepted) < needed:
        return AdaptiveDecision(action="keep", errors=None, **decision)

    errors = np.mean([prediction_error(models, s) for s in accepted], axis=0)
    if bool((errors > error_threshold).any()):
        return AdaptiveDecision(
            action="retrain", errors=errors, dataset=base + accepted, **decision
        )
    return AdaptiveDecision(action="keep", errors=errors, **decision)


# --- background jobs --------------------------------------------------------

@dataclass
class Job:
    """One background task; status moves queued -> running -> done/failed."""

    job_id: str
    kind: str
    status: str = "queued"
    progress: float = 0.0
    result: dict | None = None
    error: str | None = None
    created_at: str = field(default_factory=utc_now)
    finished_at: str | None = None

    def to_dict(self) -> dict:
        return {
            "job": self.job_id, "kind": self.kind, "status": self.status,
            "progress": self.progress, "result": self.result,
            "error": self.error, "created_at": self.created_at,
            "finished_at": self.finished_at,
        }


class JobRegistry:
    """In-memory registry of background threads, one entry per job.

    Jobs are deliberately not persisted: a thread cannot survive a restart,
    so after one the operator simply resubmits.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._jobs: dict[str, Job] = {}
        self._threads: dict[str, threading.Thread] = {}
        self._seq = itertools.count(1)

    def submit(self, kind: str, fn: Callable[[Job], dict | None]) -> Job:
        job = Job(job_id=f"{kind}-{next(self._seq)}-{uuid.uuid4().hex[:6]}", kind=kind)

        def runner():
            job.status = "running"
            try:
                job.result = fn(job)
                job.status = "done"
                job.progress = 1.0
            except Exception as err:  # surfaced through the job record
                job.status = "failed"
                job.error = f"{type(err).__name__}: {err}"
                log.exception("job %s failed", job.job_id)
            finally:
                job.finished_at = utc_now()

        thread = threading.Thread(target=runner, name=job.job_id, daemon=True)
        with self._lock:
            self._jobs[job.job_id] = job
            self._threads[job.job_id] = thread
        thread.start()
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def wait(self, job_id: str, timeout: float = 600.0) -> Job:
        thread = self._threads.get(job_id)
        if thread is None:
            raise KeyError(job_id)
        thread.join(timeout)
        if thread.is_alive():
            raise Timeout(f"job {job_id} still running after {timeout:.0f}s")
        return self._jobs[job_id]


# --- plan distribution ------------------------------------------------------

@dataclass(frozen=True)
class HouseAck:
    address: int
    ok: bool
    retries: int
    error: str | None = None


@dataclass(frozen=True)
class DistributionReport:
    day: int
    acks: tuple[HouseAck, ...]

    @property
    def all_ok(self) -> bool:
        return all(a.ok for a in self.acks)

    @property
    def failed(self) -> tuple[int, ...]:
        return tuple(a.address for a in self.acks if not a.ok)

    def to_dict(self) -> dict:
        return {
            "day": self.day,
            "all_ok": self.all_ok,
            "acks": [
                {"house": a.address, "ok": a.ok, "retries": a.retries,
                 "error": a.error}
                for a in self.acks
            ],
        }


# --- the service ------------------------------------------------------------

class Supervisor:
    """Master of one condominium: history, plans, alarms, retraining.

    Composes in process with the simulation because mortality injection
    and flock adoption need the house objects themselves; the wire
    protocol still carries every plan and telemetry exchange, so houses
    see exactly the traffic a remote master would send.
    """

    def __init__(
        self,
        store: Store,
        condo: Condominium,
        models: Sequence[WeekModel],
        base_samples: Sequence[FlockSample],
        restrictions: Sequence | None = None,
        *,
        ga_config=None,
        trainer: Callable | None = None,
        alarm_rules: Sequence[AlarmRule] = DEFAULT_ALARM_RULES,
        alarm_window_s: float = 600.0,
        error_threshold: float = 0.05,
        retries: int = 2,
        timeout: float = 1.0,
    ):
        self.store = store
        self.condo = condo
        self.master = Master(condo.exchange, retries=retries, timeout=timeout)
        self.base_samples = list(base_samples)
        self.restrictions = restrictions
        self.ga_config = ga_config
        self.jobs = JobRegistry()
        self.alarm_rules = tuple(alarm_rules)
        self.alarm_window_s = alarm_window_s
        self.error_threshold = error_threshold
        self._trainer = trainer or train_corpus_models
        self._lock = threading.RLock()
        self._models = tuple(models)
        self._model_version = int(store.get_meta("model_version", "1"))
        for address, house in sorted(condo.houses.items()):
            if store.flock(house.flock_id) is None:
                store.upsert_flock(house.flock_id, address, "active")

    # -- models --------------------------------------------------------

    @property
    def models(self) -> tuple[WeekModel, ...]:
        with self._lock:
            return self._models

    @property
    def model_version(self) -> int:
        with self._lock:
            return self._model_version

    def _swap_models(self, models: Sequence[WeekModel]) -> int:
        """Install a retrained model set; readers only ever see full sets."""
        with self._lock:
            self._models = tuple(models)
            self._model_version += 1
            version = self._model_version
        self.store.set_meta("model_version", str(version))
        return version

    # -- plans ---------------------------------------------------------

    def current_plan(self) -> FinalActionPlan | None:
        text = self.store.get_meta("current_plan")
        return plan_from_json(text) if text else None

    def set_current_plan(self, plan: FinalActionPlan, source: str) -> None:
        self.store.set_meta("current_plan", plan_to_json(plan))
        self.store.set_meta("plan_source", source)

    def distribute_daily_plan(
        self, day: int, plan: FinalActionPlan | None = None
    ) -> DistributionReport:
        """Unicast one day of the plan to every house; never all-or-nothing.

        The day is validated before any frame goes out.  Each house gets
        its own entry in the report; failures also raise a comms alarm so
        the operator sees the silent house without reading audit rows.
        """
        if not 1 <= day <= FLOCK_DAYS:
            raise ValueError(f"day {day} outside 1..{FLOCK_DAYS}")
        if plan is None:
            plan = self.current_plan()
        if plan is None:
            raise ValueError("no approved plan to distribute")
        day_plan = plan.to_day_plans()[day - 1]

        acks = []
        for address, house in sorted(self.condo.houses.items()):
            payload = encode_day_plan(house.flock_id, day_plan)
            mark = len(self.master.events)
            try:
                self.master.transact(Frame(address, WRITE_DAY_PLAN, payload))
                error = None
            except (Timeout, SlaveException) as err:
                error = f"{type(err).__name__}: {err}"
            acks.append(HouseAck(
                address=address,
                ok=error is None,
                retries=self.master.retry_count(since_seq=mark),
                error=error,
            ))

        report = DistributionReport(day=day, acks=tuple(acks))
        self.store.add_plan_audit(day, report.acks)
        failures = [
            AlarmEvent(
                at=utc_now(), house=a.address, variable="link", value=1.0,
                rule_id=COMMS_RULE.rule_id, severity=COMMS_RULE.severity,
                message=f"house {a.address}: day {day} plan not acknowledged"
                        f" ({a.error})",
            )
            for a in acks if not a.ok
        ]
        if failures:
            self.store.add_alarms(failures)
        return report

    # -- operator entries ----------------------------------------------

    def _house_at(self, address: int):
        house = self.condo.houses.get(address)
        if house is None:
            raise NoActiveFlock(f"no house at address {address}")
        return house

    def record_mortality(
        self, address: int, day: int, count: int, operator: str = "console"
    ) -> dict:
        """Operator-observed deaths for the day currently in progress.

        The count joins the natural deaths at the next day step, so the
        following telemetry read shows NlB reduced by it.
        """
        house = self._house_at(address)
        record = self.store.flock(house.flock_id)
        if house.finished or record is None or record["status"] != "active":
            raise NoActiveFlock(
                f"flock {house.flock_id} at address {address} is not active"
            )
        if count < 0:
            raise ValueError("mortality count must be non-negative")
        current = house.day + 1
        if day != current:
            raise StaleDay(
                f"entry for day {day}, house {address} is rearing day {current}"
            )
        self.store.add_mortality(house.flock_id, address, day, count, operator)
        self.condo.inject_mortality(address, count)
        status = house.report_status()
        return {
            "flock_id": house.flock_id,
            "house": address,
            "day": day,
            "count": count,
            "nlb": status.nlb,
            "nlb_projected": status.nlb - min(count, status.nlb),
        }

    # -- acquisition ---------------------------------------------------

    def poll_telemetry(self) -> list[dict]:
        """Read every house, persist the rows, and evaluate alarm rules."""
        snapshot: dict[int, dict] = {}
        for address, house in sorted(self.condo.houses.items()):
            try:
                reply = self.master.transact(Frame(address, READ_TELEMETRY))
            except SlaveException:
                continue            # no completed day yet; nothing to record
            except Timeout:
                snapshot[address] = {"link": 1.0}
                continue
            t = decode_telemetry(reply.payload)
            self.store.add_telemetry(address, house.flock_id, t)
            snapshot[address] = {
                "day": t.day, "t_min": t.t_min, "t_avg": t.t_avg,
                "t_max": t.t_max, "h_min": t.h_min, "h_avg": t.h_avg,
                "h_max": t.h_max, "mdw": t.mdw, "dfc": t.dfc,
                "dm": t.dm, "nlb": t.nlb, "link": 0.0,
            }

        recent = [
            AlarmEvent(at=r["at"], house=r["house"], variable=r["variable"],
                       value=r["value"], rule_id=r["rule_id"],
                       severity=r["severity"], message=r["message"])
            for r in self.store.alarms()
        ]
        events = evaluate_alarms(
            snapshot, self.alarm_rules, recent, self.alarm_window_s
        )
        if events:
            self.store.add_alarms(events)
        return [
            {"house": address, **row}
            for address, row in snapshot.items() if "day" in row
        ]

    # -- daily loop ----------------------------------------------------

    def advance_day(self) -> dict:
        """Distribute, tick, poll: one full supervised day."""
        day = self.condo.day + 1
        report = None
        if self.current_plan() is not None:
            report = self.distribute_daily_plan(day)
        self.condo.tick()
        rows = self.poll_telemetry()
        if self.condo.finished:
            self.complete_flocks()
        return {
            "day": self.condo.day,
            "distribution": report.to_dict() if report else None,
            "telemetry": rows,
        }

    def complete_flocks(self) -> list[int]:
        """Persist finished houses as full samples; safe to call repeatedly."""
        completed = []
        for address, house in sorted(self.condo.houses.items()):
            if not house.finished:
                continue
            record = self.store.flock(house.flock_id)
            if record is not None and record["status"] != "active":
                continue
            sample = house.to_sample()
            self.store.upsert_flock(
                house.flock_id, address, "complete", sample_to_doc(sample)
            )
            completed.append(house.flock_id)
        return completed

    def completed_samples(self) -> list[FlockSample]:
        return [
            sample_from_doc(json.loads(row["sample"]))
            for row in self.store.flocks("complete")
            if row["sample"]
        ]

    # -- background jobs -----------------------------------------------

    def start_optimize(self) -> Job:
        """Launch a full six-week planner run in the background."""
        models = self.models
        restrictions = self.restrictions
        if restrictions is None:
            raise ValueError("supervisor has no restriction boxes configured")

        def run(job: Job) -> dict:
            job.progress = 0.1
            plan, i_c, report = optimize_flock(models, restrictions, self.ga_config)
            self.store.set_meta(f"candidate:{job.job_id}", plan_to_json(plan))
            return {
                "fcr_est": report.fcr_est,
                "fcr_res": report.fcr_res,
                "arrival": [float(v) for v in i_c],
                "worst_boundary_pct": 100.0 * max(
                    float(b.relative.max()) for b in report.boundary_errors
                ),
            }

        return self.jobs.submit("optimize", run)

    def approve(self, job_id: str) -> dict:
        """Promote a finished planner job to the current plan and send it."""
        job = self.jobs.get(job_id)
        if job is None:
            raise KeyError(f"unknown job {job_id}")
        if job.kind != "optimize" or job.status != "done":
            raise ValueError(f"job {job_id} is {job.status}, not an approved"
                             " planner result")
        text = self.store.get_meta(f"candidate:{job.job_id}")
        if text is None:
            raise ValueError(f"job {job_id} left no candidate plan")
        plan = plan_from_json(text)
        self.set_current_plan(plan, source=job_id)
        report = None
        if not self.condo.finished:
            report = self.distribute_daily_plan(self.condo.day + 1, plan)
        return {
            "plan": {"fcr_est": plan.fcr_est, "fcr_res": plan.fcr_res},
            "distribution": report.to_dict() if report else None,
        }

    def start_retrain(self, dataset: Sequence[FlockSample]) -> Job:
        """Retrain on a frozen dataset copy and swap the model set in."""
        dataset = list(dataset)

        def run(job: Job) -> dict:
            job.progress = 0.1
            models = self._trainer(dataset)
            version = self._swap_models(models)
            return {"model_version": version, "samples": len(dataset)}

        return self.jobs.submit("retrain", run)

    def run_adaptive(self) -> tuple[AdaptiveDecision, Job | None]:
        """Evaluate drift over the completed flocks; launch retrain if due."""
        history = self.completed_samples()
        decision = adaptive_cycle(
            history, self.base_samples, self.models,
            error_threshold=self.error_threshold,
        )
        for flock_id in decision.rejected:
            record = self.store.flock(flock_id)
            if record is not None:
                self.store.upsert_flock(
                    flock_id, record["house"], "rejected-outlier"
                )
        job = None
        if decision.action == "retrain":
            job = self.start_retrain(decision.dataset)
        return decision, job

    # -- reporting -----------------------------------------------------

    def house_cards(self) -> list[dict]:
        cards = []
        for address, house in sorted(self.condo.houses.items()):
            status = house.report_status()
            cards.append({
                "address": address,
                "flock_id": house.flock_id,
                "day": house.day,
                "finished": house.finished,
                "nlb": status.nlb,
                "telemetry": self.store.latest_telemetry(address),
            })
        return cards

    def flock_report(self, flock_id: int) -> dict:
        """Per-day outcome series with the conversion trajectory."""
        record = self.store.flock(flock_id)
        house = next(
            (h for h in self.condo.houses.values() if h.flock_id == flock_id),
            None,
        )
        if record is None and house is None:
            raise NoActiveFlock(f"unknown flock {flock_id}")

        if record is not None and record["sample"]:
            sample = sample_from_doc(json.loads(record["sample"]))
            outcomes = sample.outcomes
        elif house is not None:
            with house.lock:
                outcomes = tuple(house.ledger)
        else:
            outcomes = ()

        series = [
            {
                "day": day,
                "mdw": o.mdw, "dfcpb": o.dfcpb, "nlbpa": o.nlbpa,
                "dm": o.dm, "nlb": o.nlb, "dfc": o.dfc,
                "fcr": fcr_basic(o.dfc, o.nlb, o.mdw),
            }
            for day, o in enumerate(outcomes, start=1)
        ]
        plan = self.current_plan()
        return {
            "flock_id": flock_id,
            "status": record["status"] if record else "active",
            "house": record["house"] if record else (house.address if house else None),
            "days": len(series),
            "series": series,
            "fcr": series[-1]["fcr"] if series else None,
            "mortality_entries": self.store.mortality(flock_id),
            "plan": (
                {"fcr_est": plan.fcr_est, "fcr_res": plan.fcr_res}
                if plan else None
            ),
        }


# --- HTTP surface -----------------------------------------------------------

class MortalityEntry(BaseModel):
    day: int
    count: int = Field(ge=0)
    operator: str = "console"


class ApproveRequest(BaseModel):
    job: str


def create_app(supervisor: Supervisor):
    """FastAPI application exposing the service under /api/v1."""
    # deferred import keeps the web stack off the library's import path
    from fastapi import APIRouter, FastAPI, HTTPException, Query

    app = FastAPI(title="flockplan supervisor", version="1")
    api = APIRouter(prefix="/api/v1")

    @api.get("/houses")
    def houses() -> list[dict]:
        return supervisor.house_cards()

    @api.get("/houses/{address}/telemetry")
    def telemetry(
        address: int,
        day_from: int | None = Query(default=None, alias="from"),
        day_to: int | None = Query(default=None, alias="to"),
    ) -> list[dict]:
        return supervisor.store.telemetry(address, day_from, day_to)

    @api.post("/houses/{address}/mortality")
    def mortality(address: int, entry: MortalityEntry) -> dict:
        try:
            return supervisor.record_mortality(
                address, entry.day, entry.count, entry.operator
            )
        except NoActiveFlock as err:
            raise HTTPException(status_code=404, detail=str(err))
        except StaleDay as err:
            raise HTTPException(status_code=409, detail=str(err))
        except ValueError as err:
            raise HTTPException(status_code=422, detail=str(err))

    @api.get("/plan/current")
    def plan_current() -> dict:
        plan = supervisor.current_plan()
        if plan is None:
            raise HTTPException(status_code=404, detail="no plan approved yet")
        return {
            "fcr_est": plan.fcr_est,
            "fcr_res": plan.fcr_res,
            "source": supervisor.store.get_meta("plan_source"),
            "days": [
                {
                    "day": p.day,
                    "t_min": p.t_min, "t_avg": p.t_avg, "t_max": p.t_max,
                    "h_min": p.h_min, "h_avg": p.h_avg, "h_max": p.h_max,
                }
                for p in plan.to_day_plans()
            ],
        }

    @api.post("/plan/optimize")
    def plan_optimize() -> dict:
        try:
            job = supervisor.start_optimize()
        except ValueError as err:
            raise HTTPException(status_code=422, detail=str(err))
        return {"job": job.job_id}

    @api.get("/jobs/{job_id}")
    def job_status(job_id: str) -> dict:
        job = supervisor.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        return job.to_dict()

    @api.post("/plan/approve")
    def plan_approve(request: ApproveRequest) -> dict:
        try:
            return supervisor.approve(request.job)
        except KeyError as err:
            raise HTTPException(status_code=404, detail=str(err.args[0]))
        except ValueError as err:
            raise HTTPException(status_code=409, detail=str(err))

    @api.get("/alarms")
    def alarms(limit: int = 200) -> list[dict]:
        return supervisor.store.alarms(limit)

    @api.get("/flocks/{flock_id}/report")
    def flock_report(flock_id: int) -> dict:
        try:
            return supervisor.flock_report(flock_id)
        except NoActiveFlock as err:
            raise HTTPException(status_code=404, detail=str(err))

    app.include_router(api)
    return app
