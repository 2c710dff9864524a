"""Framed master-slave protocol for plan delivery and telemetry collection.

One master polls up to 247 addressed house controllers over a shared
byte-stream transport.  A slave never speaks unprompted; the master keeps a
single request outstanding at any time and retries on timeouts or corrupt
replies.  Frames are length-delimited (no reliance on inter-frame silence)
and carry a CRC-16 over everything before it.
"""

from __future__ import annotations

import itertools
import socket
import struct
import threading
from dataclasses import dataclass

from .domain import DayPlan
from .errors import (
    CrcMismatch,
    Oversize,
    ProtocolViolation,
    SlaveException,
    Timeout,
    Truncated,
)

READ_TELEMETRY = 0x01
WRITE_DAY_PLAN = 0x02
READ_DAY_PLAN = 0x03
REPORT_STATUS = 0x04
EXCEPTION_FLAG = 0x80

EX_ILLEGAL_FUNCTION = 1
EX_ILLEGAL_DATA_VALUE = 3

BROADCAST = 0
MAX_ADDRESS = 247
MAX_PAYLOAD = 1024
HEADER_LEN = 4            # address + function + 2-byte payload length
CRC_LEN = 2

_FUNCTION_NAMES = {
    READ_TELEMETRY: "READ_TELEMETRY",
    WRITE_DAY_PLAN: "WRITE_DAY_PLAN",
    READ_DAY_PLAN: "READ_DAY_PLAN",
    REPORT_STATUS: "REPORT_STATUS",
}

_PLAN_FMT = ">IB3h3H"     # flock id, day, temps x10 signed, humidity x10
_ACK_FMT = ">IB"
_TELEMETRY_FMT = ">B3h3HIIHI"
_STATUS_FMT = ">IBBI"

STATUS_IDLE = 0
STATUS_ACTIVE = 1
STATUS_COMPLETE = 2


def _build_crc_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ 0xA001 if crc & 1 else crc >> 1
        table.append(crc)
    return tuple(table)


_CRC_TABLE = _build_crc_table()


def crc16(data: bytes) -> int:
    """CRC-16 with reflected polynomial 0xA001, initial value 0xFFFF."""
    crc = 0xFFFF
    for b in data:
        crc = (crc >> 8) ^ _CRC_TABLE[(crc ^ b) & 0xFF]
    return crc


def function_name(code: int) -> str:
    if code & EXCEPTION_FLAG:
        base = _FUNCTION_NAMES.get(code & ~EXCEPTION_FLAG, hex(code & ~EXCEPTION_FLAG))
        return f"EXCEPTION({base})"
    return _FUNCTION_NAMES.get(code, hex(code))


@dataclass(frozen=True)
class Frame:
    """One addressed protocol message; address 0 is the broadcast channel."""

    address: int
    function: int
    payload: bytes = b""

    def __post_init__(self):
        if not BROADCAST <= self.address <= MAX_ADDRESS:
            raise ValueError(f"address {self.address} outside 0..{MAX_ADDRESS}")
        if not 0 <= self.function <= 0xFF:
            raise ValueError(f"function {self.function:#x} is not one byte")
        if len(self.payload) > MAX_PAYLOAD:
            raise ValueError(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD}")

    @property
    def is_exception(self) -> bool:
        return bool(self.function & EXCEPTION_FLAG)

    @property
    def exception_code(self) -> int:
        if not self.is_exception or not self.payload:
            raise ProtocolViolation("frame carries no exception code")
        return self.payload[0]


def encode_frame(frame: Frame) -> bytes:
    body = (
        bytes([frame.address, frame.function])
        + struct.pack(">H", len(frame.payload))
        + frame.payload
    )
    return body + struct.pack("<H", crc16(body))


def decode_frame(raw: bytes) -> Frame:
    """Parse exactly one frame; every corruption mode is distinguishable."""
    if len(raw) < HEADER_LEN:
        raise Truncated(f"{len(raw)} bytes cannot hold a frame header")
    declared = struct.unpack_from(">H", raw, 2)[0]
    if declared > MAX_PAYLOAD:
        raise Oversize(f"declared payload of {declared} bytes exceeds {MAX_PAYLOAD}")
    need = HEADER_LEN + declared + CRC_LEN
    if len(raw) < need:
        raise Truncated(f"frame needs {need} bytes, got {len(raw)}")
    body = raw[: HEADER_LEN + declared]
    (wire_crc,) = struct.unpack_from("<H", raw, HEADER_LEN + declared)
    computed = crc16(body)
    if wire_crc != computed:
        raise CrcMismatch(f"crc {wire_crc:#06x} != computed {computed:#06x}")
    if len(raw) > need:
        raise ProtocolViolation(f"{len(raw) - need} trailing byte(s) after frame")
    if raw[0] > MAX_ADDRESS:
        raise ProtocolViolation(f"address {raw[0]} outside 0..{MAX_ADDRESS}")
    return Frame(raw[0], raw[1], bytes(raw[HEADER_LEN : HEADER_LEN + declared]))


def frame_dump(frame: Frame) -> str:
    """Hex dump plus decoded header fields, for logs and debugging."""
    raw = encode_frame(frame)
    hexes = " ".join(f"{b:02x}" for b in raw)
    line = (
        f"{hexes}  addr={frame.address} func={function_name(frame.function)} "
        f"len={len(frame.payload)}"
    )
    if frame.is_exception and frame.payload:
        line += f" code={frame.payload[0]}"
    return line


def recv_exact(conn, n: int) -> bytes:
    """Read exactly n bytes from a socket-like object or raise Truncated."""
    chunks = []
    remaining = n
    while remaining:
        chunk = conn.recv(remaining)
        if not chunk:
            raise Truncated(f"stream closed with {remaining} byte(s) pending")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(conn) -> Frame:
    """Read one length-delimited frame from a stream."""
    header = recv_exact(conn, HEADER_LEN)
    declared = struct.unpack_from(">H", header, 2)[0]
    if declared > MAX_PAYLOAD:
        raise Oversize(f"declared payload of {declared} bytes exceeds {MAX_PAYLOAD}")
    rest = recv_exact(conn, declared + CRC_LEN)
    return decode_frame(header + rest)


def send_frame(conn, frame: Frame) -> None:
    conn.sendall(encode_frame(frame))


def _pack_fixed(value: float, factor: int, lo: int, hi: int, what: str) -> int:
    scaled = round(value * factor)
    if not lo <= scaled <= hi:
        raise ValueError(f"{what} {value} outside wire range")
    return scaled


def encode_day_plan(flock_id: int, plan: DayPlan) -> bytes:
    """Serialize a day plan; climate is quantized to the 0.1 wire grid."""
    return struct.pack(
        _PLAN_FMT,
        flock_id,
        plan.day,
        _pack_fixed(plan.t_min, 10, -(2**15), 2**15 - 1, "temperature"),
        _pack_fixed(plan.t_avg, 10, -(2**15), 2**15 - 1, "temperature"),
        _pack_fixed(plan.t_max, 10, -(2**15), 2**15 - 1, "temperature"),
        _pack_fixed(plan.h_min, 10, 0, 2**16 - 1, "humidity"),
        _pack_fixed(plan.h_avg, 10, 0, 2**16 - 1, "humidity"),
        _pack_fixed(plan.h_max, 10, 0, 2**16 - 1, "humidity"),
    )


def decode_day_plan(payload: bytes) -> tuple[int, DayPlan]:
    try:
        flock_id, day, t1, t2, t3, h1, h2, h3 = struct.unpack(_PLAN_FMT, payload)
    except struct.error as err:
        raise ValueError(f"malformed day-plan payload: {err}") from None
    plan = DayPlan(day, t1 / 10.0, t2 / 10.0, t3 / 10.0, h1 / 10.0, h2 / 10.0, h3 / 10.0)
    return flock_id, plan


@dataclass(frozen=True)
class Telemetry:
    """One day of house readings in domain units (deg C, %, g, kg, birds)."""

    day: int
    t_min: float
    t_avg: float
    t_max: float
    h_min: float
    h_avg: float
    h_max: float
    mdw: float
    dfc: float
    dm: int
    nlb: int

    def __post_init__(self):
        if not 1 <= self.day <= 255:
            raise ValueError(f"day {self.day} outside wire range")
        if self.mdw < 0 or self.dfc < 0 or self.dm < 0 or self.nlb < 0:
            raise ValueError("telemetry values must be non-negative")


def encode_telemetry(t: Telemetry) -> bytes:
    return struct.pack(
        _TELEMETRY_FMT,
        t.day,
        _pack_fixed(t.t_min, 10, -(2**15), 2**15 - 1, "temperature"),
        _pack_fixed(t.t_avg, 10, -(2**15), 2**15 - 1, "temperature"),
        _pack_fixed(t.t_max, 10, -(2**15), 2**15 - 1, "temperature"),
        _pack_fixed(t.h_min, 10, 0, 2**16 - 1, "humidity"),
        _pack_fixed(t.h_avg, 10, 0, 2**16 - 1, "humidity"),
        _pack_fixed(t.h_max, 10, 0, 2**16 - 1, "humidity"),
        _pack_fixed(t.mdw, 1, 0, 2**32 - 1, "weight"),
        _pack_fixed(t.dfc, 1000, 0, 2**32 - 1, "feed mass"),
        t.dm,
        t.nlb,
    )


def decode_telemetry(payload: bytes) -> Telemetry:
    try:
        day, t1, t2, t3, h1, h2, h3, mdw, dfc, dm, nlb = struct.unpack(
            _TELEMETRY_FMT, payload
        )
    except struct.error as err:
        raise ValueError(f"malformed telemetry payload: {err}") from None
    return Telemetry(
        day,
        t1 / 10.0, t2 / 10.0, t3 / 10.0,
        h1 / 10.0, h2 / 10.0, h3 / 10.0,
        float(mdw), dfc / 1000.0, dm, nlb,
    )


@dataclass(frozen=True)
class HouseStatus:
    flock_id: int
    day: int
    state: int       # STATUS_IDLE / STATUS_ACTIVE / STATUS_COMPLETE
    nlb: int

    def __post_init__(self):
        if self.state not in (STATUS_IDLE, STATUS_ACTIVE, STATUS_COMPLETE):
            raise ValueError(f"unknown house state {self.state}")


def encode_status(s: HouseStatus) -> bytes:
    return struct.pack(_STATUS_FMT, s.flock_id, s.day, s.state, s.nlb)


def decode_status(payload: bytes) -> HouseStatus:
    try:
        flock_id, day, state, nlb = struct.unpack(_STATUS_FMT, payload)
    except struct.error as err:
        raise ValueError(f"malformed status payload: {err}") from None
    return HouseStatus(flock_id, day, state, nlb)


def _exception_frame(address: int, function: int, code: int) -> Frame:
    return Frame(address, EXCEPTION_FLAG | function, bytes([code]))


def slave_handle(service, frame: Frame) -> Frame | None:
    """Dispatch one request against a house service.

    ``service`` provides ``address``, ``read_telemetry()``,
    ``store_day_plan(flock_id, plan)``, ``read_day_plan(day)`` and
    ``report_status()``.  Frames addressed elsewhere are ignored (None);
    broadcast writes are applied but never answered.  Malformed or invalid
    payloads come back as EXCEPTION frames, not raised errors, so one bad
    request cannot wedge the house loop.
    """
    if frame.address not in (service.address, BROADCAST):
        return None
    broadcast = frame.address == BROADCAST

    def fail(code: int) -> Frame | None:
        return None if broadcast else _exception_frame(service.address, frame.function, code)

    try:
        if frame.function == READ_TELEMETRY:
            if frame.payload:
                return fail(EX_ILLEGAL_DATA_VALUE)
            reply = encode_telemetry(service.read_telemetry())
        elif frame.function == WRITE_DAY_PLAN:
            flock_id, plan = decode_day_plan(frame.payload)
            service.store_day_plan(flock_id, plan)
            reply = struct.pack(_ACK_FMT, flock_id, plan.day)
        elif frame.function == READ_DAY_PLAN:
            if len(frame.payload) != 1:
                return fail(EX_ILLEGAL_DATA_VALUE)
            entry = service.read_day_plan(frame.payload[0])
            if entry is None:
                return fail(EX_ILLEGAL_DATA_VALUE)
            reply = encode_day_plan(*entry)
        elif frame.function == REPORT_STATUS:
            if frame.payload:
                return fail(EX_ILLEGAL_DATA_VALUE)
            reply = encode_status(service.report_status())
        else:
            return fail(EX_ILLEGAL_FUNCTION)
    except ValueError:
        # a service that refuses a request (no telemetry yet, bad values)
        # answers on the wire instead of wedging the house loop
        return fail(EX_ILLEGAL_DATA_VALUE)

    if broadcast:
        return None
    return Frame(service.address, frame.function, reply)


@dataclass(frozen=True)
class MasterEvent:
    """One entry of the master's transaction log."""

    seq: int
    kind: str        # begin / send / timeout / corrupt / exception / reply / end
    address: int
    function: int
    attempt: int
    detail: str = ""


class Master:
    """Serialized transaction master with retry and event accounting.

    ``exchange(raw, timeout)`` is the transport hook: it sends one encoded
    request and returns the raw reply, or None when nothing arrived in
    time.  A timeout of 0 means fire-and-forget (used for broadcast).  The
    internal lock keeps a single request outstanding across threads.
    """

    def __init__(self, exchange, retries: int = 2, timeout: float = 1.0):
        if retries < 0:
            raise ValueError("retries must be >= 0")
        if timeout <= 0:
            raise ValueError("timeout must be positive")
        self._exchange = exchange
        self._retries = retries
        self._timeout = timeout
        self._lock = threading.Lock()
        self._seq = itertools.count()
        self.events: list[MasterEvent] = []

    def _log(self, kind: str, frame: Frame, attempt: int, detail: str = "") -> None:
        self.events.append(
            MasterEvent(next(self._seq), kind, frame.address, frame.function, attempt, detail)
        )

    def transact(self, request: Frame) -> Frame:
        """Send one request and return the matching reply.

        Retries on timeout and on corrupt replies; a reply from the wrong
        address or with a mismatched function is a hard protocol error.
        """
        if request.address == BROADCAST:
            raise ProtocolViolation("broadcast frames cannot be transacted; use broadcast()")
        raw_request = encode_frame(request)
        with self._lock:
            self._log("begin", request, 0)
            try:
                for attempt in range(self._retries + 1):
                    self._log("send", request, attempt)
                    raw = self._exchange(raw_request, self._timeout)
                    if raw is None:
                        self._log("timeout", request, attempt)
                        continue
                    try:
                        reply = decode_frame(raw)
                    except (CrcMismatch, Truncated, Oversize) as err:
                        self._log("corrupt", request, attempt, str(err))
                        continue
                    if reply.address != request.address:
                        raise ProtocolViolation(
                            f"reply from address {reply.address}, expected {request.address}"
                        )
                    if reply.is_exception:
                        if reply.function != (EXCEPTION_FLAG | request.function):
                            raise ProtocolViolation(
                                f"exception function {reply.function:#x} does not match request"
                            )
                        self._log("exception", reply, attempt, f"code={reply.exception_code}")
                        raise SlaveException(reply.exception_code)
                    if reply.function != request.function:
                        raise ProtocolViolation(
                            f"reply function {reply.function:#x} does not echo request"
                        )
                    self._log("reply", reply, attempt)
                    return reply
                raise Timeout(
                    f"no valid reply from address {request.address} "
                    f"after {self._retries + 1} attempt(s)"
                )
            finally:
                self._log("end", request, 0)

    def broadcast(self, request: Frame) -> None:
        """Fire one unanswered broadcast write to every listening house."""
        if request.address != BROADCAST:
            raise ProtocolViolation("broadcast requires address 0")
        if request.function != WRITE_DAY_PLAN:
            raise ProtocolViolation("only WRITE_DAY_PLAN may be broadcast")
        with self._lock:
            self._log("begin", request, 0)
            self._exchange(encode_frame(request), 0.0)
            self._log("end", request, 0)

    def retry_count(self, since_seq: int = 0) -> int:
        """Timeouts plus corrupt replies logged at or after ``since_seq``."""
        return sum(
            1
            for e in self.events
            if e.seq >= since_seq and e.kind in ("timeout", "corrupt")
        )


def tcp_exchange(host: str, port: int):
    """Build a Master transport that opens one TCP connection per request.

    Connection failures and silence both surface as None, which the master
    treats as a timeout and retries; corrupt replies are passed through raw
    for the master to reject.
    """

    def exchange(raw: bytes, timeout: float):
        try:
            with socket.create_connection((host, port), timeout=timeout or 1.0) as conn:
                conn.sendall(raw)
                if timeout == 0.0:
                    return None
                conn.settimeout(timeout)
                header = recv_exact(conn, HEADER_LEN)
                declared = struct.unpack_from(">H", header, 2)[0]
                if declared > MAX_PAYLOAD:
                    return header
                return header + recv_exact(conn, declared + CRC_LEN)
        except (Truncated, OSError):
            return None

    return exchange
