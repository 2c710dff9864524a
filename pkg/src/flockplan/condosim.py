"""Discrete-day condominium simulation: n houses behind the wire protocol.

Each house advances its flock with the same single-day transition the
corpus generator uses, so a simulated condominium is bit-compatible with
batch generation under identical seeds and plans.  Houses are protocol
slaves; a supervision master reaches them through an in-process exchange
or over TCP.
"""

from __future__ import annotations

import json
import logging
import socketserver
import struct
import threading
from dataclasses import asdict, dataclass, field, replace

from .dataset import (
    FlockState,
    GeneratorConfig,
    _day_rng,
    comfort_plan,
    flock_arrival,
    initial_state,
    step_flock_day,
)
from .domain import FLOCK_DAYS, DayOutcome, DayPlan, FlockSample
from .errors import (
    AddressCollision,
    ConfigDomain,
    FlockComplete,
    FlockPlanError,
    ParseError,
    SchemaVersionError,
    Truncated,
)
from .protocol import (
    BROADCAST,
    CRC_LEN,
    HEADER_LEN,
    MAX_ADDRESS,
    MAX_PAYLOAD,
    STATUS_ACTIVE,
    STATUS_COMPLETE,
    HouseStatus,
    Telemetry,
    decode_frame,
    encode_frame,
    recv_exact,
    slave_handle,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CondoConfig:
    """Shape and seeding of one simulated condominium."""

    n_houses: int = 3
    base_address: int = 1
    flock_base_id: int = 1000
    noisy: bool = True
    tick_interval_s: float = 0.0   # 0 = manual ticks; >0 = auto-advance cadence
    addresses: tuple[int, ...] | None = None
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def __post_init__(self):
        if self.n_houses < 1:
            raise ConfigDomain("a condominium needs at least one house")
        if self.tick_interval_s < 0:
            raise ConfigDomain("tick interval must be non-negative")
        addresses = self.resolved_addresses()
        if len(set(addresses)) != len(addresses):
            raise AddressCollision(f"duplicate slave address in {addresses}")
        for addr in addresses:
            if not 1 <= addr <= MAX_ADDRESS:
                raise ConfigDomain(f"address {addr} outside 1..{MAX_ADDRESS}")

    def resolved_addresses(self) -> tuple[int, ...]:
        if self.addresses is not None:
            if len(self.addresses) != self.n_houses:
                raise ConfigDomain(
                    f"{len(self.addresses)} addresses for {self.n_houses} houses"
                )
            return tuple(self.addresses)
        return tuple(range(self.base_address, self.base_address + self.n_houses))

    def to_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "n_houses": self.n_houses,
            "base_address": self.base_address,
            "flock_base_id": self.flock_base_id,
            "noisy": self.noisy,
            "tick_interval_s": self.tick_interval_s,
            "addresses": list(self.addresses) if self.addresses else None,
            "generator": json.loads(self.generator.to_json()),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CondoConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"condominium config is not valid JSON: {exc}") from None
        version = doc.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(
                f"condominium schema_version {version!r}, expected {SCHEMA_VERSION}"
            )
        generator = GeneratorConfig.from_json(json.dumps(doc.pop("generator", {})))
        addresses = doc.pop("addresses", None)
        try:
            return cls(
                generator=generator,
                addresses=tuple(addresses) if addresses is not None else None,
                **doc,
            )
        except TypeError as exc:
            raise ParseError(f"bad condominium config field: {exc}") from None


class HouseSim:
    """One poultry house: a live flock exposed as a protocol slave.

    The day counter moves only through :meth:`step_day`; the outcome ledger
    is append-only.  All public methods take the house lock, and the lock
    is re-entrant so a protocol dispatch wrapping several calls stays
    atomic against the tick driver.
    """

    def __init__(self, address: int, cfg: GeneratorConfig, flock_id: int,
                 noisy: bool = True):
        if not 1 <= address <= MAX_ADDRESS:
            raise ConfigDomain(f"address {address} outside 1..{MAX_ADDRESS}")
        self.address = address
        self.cfg = cfg
        self.flock_id = flock_id
        self.noisy = noisy
        self.lock = threading.RLock()
        geometry, placed, arrival = flock_arrival(cfg, flock_id)
        self.geometry = geometry
        self.initial_birds = placed
        self._state = initial_state(placed, arrival)
        self._mdw0 = self._state.mdw_g
        self.ledger: list[DayOutcome] = []
        self.applied: list[DayPlan] = []
        self.pending: dict[tuple[int, int], DayPlan] = {}
        self.injected: list[int] = []
        self.warnings: list[str] = []
        self._plan_was_received = False

    @property
    def day(self) -> int:
        return self._state.day

    @property
    def finished(self) -> bool:
        return self._state.day >= FLOCK_DAYS

    # -- protocol service surface -------------------------------------

    def read_telemetry(self) -> Telemetry:
        with self.lock:
            if not self.ledger:
                raise ValueError("no telemetry before the first completed day")
            out, plan = self.ledger[-1], self.applied[-1]
            return Telemetry(
                plan.day,
                plan.t_min, plan.t_avg, plan.t_max,
                plan.h_min, plan.h_avg, plan.h_max,
                out.mdw, out.dfc, out.dm, out.nlb,
            )

    def store_day_plan(self, flock_id: int, plan: DayPlan) -> None:
        with self.lock:
            self.pending[(flock_id, plan.day)] = plan
            self._plan_was_received = True

    def read_day_plan(self, day: int) -> tuple[int, DayPlan] | None:
        with self.lock:
            if (self.flock_id, day) in self.pending:
                return self.flock_id, self.pending[(self.flock_id, day)]
            if 1 <= day <= len(self.applied):
                return self.flock_id, self.applied[day - 1]
            return None

    def report_status(self) -> HouseStatus:
        with self.lock:
            state = STATUS_COMPLETE if self.finished else STATUS_ACTIVE
            return HouseStatus(self.flock_id, self.day, state, self._state.nlb)

    # -- simulation ----------------------------------------------------

    def inject_mortality(self, count: int) -> None:
        """Queue operator-reported deaths; applied at the next day step."""
        with self.lock:
            if count < 0:
                raise ValueError("mortality count must be non-negative")
            if self.finished:
                raise FlockComplete(f"house {self.address} finished its flock")
            self.injected.append(int(count))

    def _warn(self, message: str) -> None:
        self.warnings.append(message)
        log.warning("house %d: %s", self.address, message)

    def _fallback_plan(self, day: int) -> DayPlan:
        if self._plan_was_received and self.applied:
            prev = self.applied[-1]
            self._warn(f"day {day}: no plan received, holding day {prev.day} settings")
            return replace(prev, day=day)
        self._warn(f"day {day}: no plan ever received, using the default schedule")
        return comfort_plan(self.cfg, day)

    def step_day(self) -> DayOutcome:
        """Advance the flock one day under the pending (or fallback) plan."""
        with self.lock:
            if self.finished:
                raise FlockComplete(
                    f"house {self.address} already completed day {FLOCK_DAYS}"
                )
            day = self._state.day + 1
            plan = self.pending.get((self.flock_id, day))
            if plan is None:
                plan = self._fallback_plan(day)
            rng = _day_rng(self.cfg.seed, self.flock_id, day) if self.noisy else None
            state, outcome = step_flock_day(
                self.cfg, self._state, plan, self.geometry, rng
            )
            extra = min(sum(self.injected), state.nlb)
            self.injected.clear()
            if extra:
                # operator-reported deaths stack on the natural ones before
                # the living-bird count settles for the day
                state = replace(state, nlb=state.nlb - extra)
                outcome = DayOutcome(
                    mdw=outcome.mdw,
                    dfcpb=outcome.dfc / state.nlb if state.nlb else 0.0,
                    nlbpa=state.nlb / self.geometry.area_m2,
                    dm=outcome.dm + extra,
                    nlb=state.nlb,
                    dfc=outcome.dfc,
                    dmpa=(outcome.dm + extra) / self.geometry.area_m2,
                )
            self._state = state
            self.ledger.append(outcome)
            self.applied.append(plan)
            return outcome

    def to_sample(self) -> FlockSample:
        """Package the completed flock for the adaptive training workflow."""
        with self.lock:
            if not self.finished:
                raise ValueError(f"flock still at day {self.day} of {FLOCK_DAYS}")
            return FlockSample(
                house=self.geometry,
                initial_birds=self.initial_birds,
                plans=tuple(self.applied),
                outcomes=tuple(self.ledger),
                initial_conditions=(
                    self._mdw0, 0.0, self.initial_birds / self.geometry.area_m2
                ),
                flock_id=self.flock_id,
            )

    # -- persistence ---------------------------------------------------

    def snapshot(self) -> dict:
        with self.lock:
            return {
                "address": self.address,
                "flock_id": self.flock_id,
                "noisy": self.noisy,
                "state": asdict(self._state),
                "applied": [asdict(p) for p in self.applied],
                "ledger": [asdict(o) for o in self.ledger],
                "pending": [
                    {"flock_id": fid, "plan": asdict(plan)}
                    for (fid, _), plan in sorted(self.pending.items())
                ],
                "injected": list(self.injected),
                "warnings": list(self.warnings),
                "plan_was_received": self._plan_was_received,
            }

    @classmethod
    def from_snapshot(cls, cfg: GeneratorConfig, doc: dict) -> "HouseSim":
        try:
            house = cls(doc["address"], cfg, doc["flock_id"], doc["noisy"])
            house._state = FlockState(**doc["state"])
            house.applied = [DayPlan(**p) for p in doc["applied"]]
            house.ledger = [DayOutcome(**o) for o in doc["ledger"]]
            house.pending = {
                (entry["flock_id"], entry["plan"]["day"]): DayPlan(**entry["plan"])
                for entry in doc["pending"]
            }
            house.injected = [int(c) for c in doc["injected"]]
            house.warnings = list(doc["warnings"])
            house._plan_was_received = doc["plan_was_received"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad house snapshot: {exc}") from None
        return house


class Condominium:
    """The full condominium: lockstep houses plus the shared message path."""

    def __init__(self, config: CondoConfig, houses: dict[int, HouseSim] | None = None):
        self.config = config
        if houses is None:
            houses = {}
            for i, addr in enumerate(config.resolved_addresses()):
                houses[addr] = HouseSim(
                    addr, config.generator, config.flock_base_id + i, config.noisy
                )
        if len(houses) != config.n_houses:
            raise ConfigDomain(
                f"{len(houses)} houses restored for a {config.n_houses}-house config"
            )
        self.houses = houses
        self._tick_lock = threading.RLock()

    @property
    def day(self) -> int:
        return min(h.day for h in self.houses.values())

    @property
    def finished(self) -> bool:
        return all(h.finished for h in self.houses.values())

    def tick(self) -> dict[int, DayOutcome]:
        """Advance every house one day; snapshots never observe a half-tick."""
        with self._tick_lock:
            if self.finished:
                raise FlockComplete("all houses completed their flocks")
            return {addr: house.step_day() for addr, house in sorted(self.houses.items())}

    def inject_mortality(self, address: int, count: int) -> None:
        self.houses[address].inject_mortality(count)

    def exchange(self, raw: bytes, timeout: float | None = None):
        """In-process transport: route one encoded frame to its house.

        Mirrors the physical medium: corrupt frames and unknown addresses
        get no answer at all, so the master's timeout machinery sees the
        same silence a broken wire would produce.
        """
        try:
            frame = decode_frame(raw)
        except FlockPlanError:
            return None
        if frame.address == BROADCAST:
            for _, house in sorted(self.houses.items()):
                with house.lock:
                    slave_handle(house, frame)
            return None
        house = self.houses.get(frame.address)
        if house is None:
            return None
        with house.lock:
            reply = slave_handle(house, frame)
        return None if reply is None else encode_frame(reply)

    def snapshot(self) -> dict:
        with self._tick_lock:
            return {
                "schema_version": SCHEMA_VERSION,
                "day": self.day,
                "houses": [
                    house.snapshot() for _, house in sorted(self.houses.items())
                ],
            }

    @classmethod
    def restore(cls, config: CondoConfig, snap: dict) -> "Condominium":
        version = snap.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(
                f"snapshot schema_version {version!r}, expected {SCHEMA_VERSION}"
            )
        houses = {}
        for doc in snap.get("houses", []):
            house = HouseSim.from_snapshot(config.generator, doc)
            if house.address in houses:
                raise AddressCollision(f"snapshot repeats address {house.address}")
            houses[house.address] = house
        return cls(config, houses)


class _FrameHandler(socketserver.BaseRequestHandler):
    def handle(self):
        conn = self.request
        while True:
            try:
                header = recv_exact(conn, HEADER_LEN)
                declared = struct.unpack_from(">H", header, 2)[0]
                if declared > MAX_PAYLOAD:
                    return
                raw = header + recv_exact(conn, declared + CRC_LEN)
            except (Truncated, OSError):
                return
            reply = self.server.condo.exchange(raw)
            if reply is not None:
                try:
                    conn.sendall(reply)
                except OSError:
                    return


class _CondoServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class CondoHandle:
    """Running condominium: TCP slaves plus an optional day ticker."""

    def __init__(self, condo: Condominium, host: str = "127.0.0.1", port: int = 0):
        self.condo = condo
        self._server = _CondoServer((host, port), _FrameHandler)
        self._server.condo = condo
        self._server_thread: threading.Thread | None = None
        self._ticker: threading.Thread | None = None
        self._stop = threading.Event()

    @property
    def endpoint(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return host, port

    def start(self) -> "CondoHandle":
        self._server_thread = threading.Thread(
            target=self._server.serve_forever, name="condo-server", daemon=True
        )
        self._server_thread.start()
        interval = self.condo.config.tick_interval_s
        if interval > 0:
            self._ticker = threading.Thread(
                target=self._run_ticks, args=(interval,), name="condo-ticker",
                daemon=True,
            )
            self._ticker.start()
        return self

    def _run_ticks(self, interval: float) -> None:
        while not self._stop.wait(interval):
            try:
                self.condo.tick()
            except FlockComplete:
                return

    def stop(self) -> None:
        self._stop.set()
        self._server.shutdown()
        self._server.server_close()
        if self._server_thread is not None:
            self._server_thread.join(timeout=5)
        if self._ticker is not None:
            self._ticker.join(timeout=5)

    def inspect(self) -> dict:
        return self.condo.snapshot()

    def __enter__(self) -> "CondoHandle":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def run_condominium(
    config: CondoConfig, host: str = "127.0.0.1", port: int = 0
) -> CondoHandle:
    """Build a condominium and bind its houses to a TCP endpoint."""
    return CondoHandle(Condominium(config), host, port)
