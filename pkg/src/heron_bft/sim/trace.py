"""Run traces: manifest, per-step records and the binary trace file."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from heron_bft.constants import TRACE_FORMAT_TAG, TRACE_MAGIC
from heron_bft.errors import ParseError
from heron_bft.models import NOTE_TYPES, Config, Note, ReplicaId
from heron_bft.wire import Reader, Writer


class EventKind(enum.IntEnum):
    START = 0
    SUBMIT = 1
    RECEIVE = 2
    FLUSH = 3


@dataclass(frozen=True)
class TraceManifest:
    """Everything needed to reproduce a run."""

    n: int
    f: int
    batch_size: int
    tx_size: int
    seed: int
    policy: str
    faults: str
    workload: dict
    max_steps: int
    quiesce: bool
    debt_cap: int
    lookahead: int
    key_seed: int
    modulus_bits: int
    keys_digest: str = ""
    workload_digest: str = ""
    signature_bytes: int = 0
    share_bytes: int = 0

    @property
    def cfg(self) -> Config:
        return Config(self.n, self.f, self.batch_size, self.tx_size)

    def to_json(self) -> bytes:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_json(cls, data: bytes) -> TraceManifest:
        try:
            raw = json.loads(data)
            names = {f.name for f in dataclasses.fields(cls)}
            return cls(**{k: v for k, v in raw.items() if k in names})
        except (ValueError, TypeError) as e:
            raise ParseError(f"bad trace manifest: {e}") from e


@dataclass(frozen=True)
class StepRecord:
    """One event handled by one replica and everything it produced."""

    step: int
    replica: ReplicaId
    event: EventKind
    src: ReplicaId
    msg_kind: int  # 0 unless event is RECEIVE
    event_digest: bytes
    outputs_digest: bytes
    sent: bytes = b""  # one MessageKind byte per point-to-point message sent
    sent_bytes: int = 0
    delivered: tuple[bytes, ...] = ()
    notes: tuple[Note, ...] = ()


@dataclass
class Trace:
    manifest: TraceManifest
    records: list[StepRecord] = field(default_factory=list)
    snapshots: list[dict] = field(default_factory=list)
    quiescent: bool = False
    final_step: int = 0

    def footer(self) -> dict:
        return {
            "quiescent": self.quiescent,
            "final_step": self.final_step,
            "snapshots": self.snapshots,
        }

    @property
    def digest(self) -> bytes:
        return hashlib.sha256(_encode_body(self)).digest()

    def notes(self, note_type: type | None = None):
        """Yield (step, replica, note) in trace order, optionally filtered by type."""
        for rec in self.records:
            for note in rec.notes:
                if note_type is None or isinstance(note, note_type):
                    yield rec.step, rec.replica, note


# --- Encoding ---

def _write_note(w: Writer, note: Note) -> None:
    w.u8(NOTE_TYPES.index(type(note)))
    for f in dataclasses.fields(note):
        value = getattr(note, f.name)
        if isinstance(value, bytes):
            w.u8(1).blob(value)
        else:
            w.u8(0).u64(value)


def _read_note(r: Reader) -> Note:
    index = r.u8()
    if index >= len(NOTE_TYPES):
        raise ParseError(f"unknown note type {index}")
    cls = NOTE_TYPES[index]
    values = []
    for _ in dataclasses.fields(cls):
        tag = r.u8()
        if tag == 0:
            values.append(r.u64())
        elif tag == 1:
            values.append(r.blob())
        else:
            raise ParseError(f"unknown note field tag {tag}")
    return cls(*values)


def encode_record(rec: StepRecord) -> bytes:
    w = Writer()
    w.u64(rec.step).u32(rec.replica).u8(rec.event).u32(rec.src).u8(rec.msg_kind)
    w.blob(rec.event_digest).blob(rec.outputs_digest).blob(rec.sent).u64(rec.sent_bytes)
    w.u32(len(rec.delivered))
    for d in rec.delivered:
        w.blob(d)
    w.u32(len(rec.notes))
    for note in rec.notes:
        _write_note(w, note)
    return w.getvalue()


def decode_record(data: bytes) -> StepRecord:
    r = Reader(data)
    step, replica = r.u64(), r.u32()
    try:
        event = EventKind(r.u8())
    except ValueError as e:
        raise ParseError(str(e)) from e
    src, msg_kind = r.u32(), r.u8()
    event_digest, outputs_digest, sent, sent_bytes = r.blob(), r.blob(), r.blob(), r.u64()
    delivered = tuple(r.blob() for _ in range(r.u32()))
    notes = tuple(_read_note(r) for _ in range(r.u32()))
    r.expect_end()
    return StepRecord(
        step, replica, event, src, msg_kind, event_digest, outputs_digest,
        sent, sent_bytes, delivered, notes,
    )


def _encode_body(trace: Trace) -> bytes:
    w = Writer().raw(TRACE_MAGIC).u8(TRACE_FORMAT_TAG)
    w.blob(trace.manifest.to_json())
    w.u64(len(trace.records))
    for rec in trace.records:
        w.blob(encode_record(rec))
    w.blob(json.dumps(trace.footer(), sort_keys=True, separators=(",", ":")).encode())
    return w.getvalue()


def dump_trace(trace: Trace) -> bytes:
    body = _encode_body(trace)
    return body + hashlib.sha256(body).digest()


def load_trace(data: bytes) -> Trace:
    if len(data) < 32:
        raise ParseError("trace file too short")
    body, stored = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != stored:
        raise ParseError("trace digest mismatch")
    r = Reader(body)
    if r.raw(len(TRACE_MAGIC)) != TRACE_MAGIC:
        raise ParseError("not a trace file")
    tag = r.u8()
    if tag != TRACE_FORMAT_TAG:
        raise ParseError(f"unsupported trace format tag {tag}")
    manifest = TraceManifest.from_json(r.blob())
    records = [decode_record(r.blob()) for _ in range(r.u64())]
    try:
        footer = json.loads(r.blob())
    except ValueError as e:
        raise ParseError(f"bad trace footer: {e}") from e
    r.expect_end()
    return Trace(
        manifest=manifest,
        records=records,
        snapshots=footer.get("snapshots", []),
        quiescent=bool(footer.get("quiescent", False)),
        final_step=int(footer.get("final_step", 0)),
    )


def write_trace(path: Path, trace: Trace) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_trace(trace))
    return path


def read_trace(path: Path) -> Trace:
    return load_trace(Path(path).read_bytes())
