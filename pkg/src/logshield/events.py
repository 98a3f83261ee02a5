"""Canonical event records and parsers for event, label and schema files.

Event files are UTF-8 JSON-lines with the fields
``id, actor_id, object_id, object, action, ts, host``. Label files hold one
malicious event id per line, or JSON-lines objects with an ``id`` field.
"""
from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Union

logger = logging.getLogger(__name__)

EVENT_FIELDS = ("id", "actor_id", "object_id", "object", "action", "ts", "host")

Source = Union[bytes, str, IO[bytes], IO[str]]


class IngestError(ValueError):
    """Base class for contract violations while reading input files."""


class ParseError(IngestError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SchemaError(IngestError):
    def __init__(self, message: str, value: str = "", line_no: int | None = None):
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)
        self.value = value
        self.line_no = line_no


@dataclass(frozen=True)
class DatasetSchema:
    objects: tuple[str, ...]
    actions: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "actions", tuple(self.actions))
        for kind, names in (("objects", self.objects), ("actions", self.actions)):
            if not names:
                raise SchemaError(f"schema {kind} list is empty")
            if len(set(names)) != len(names):
                raise SchemaError(f"schema {kind} list has duplicates")
            for n in names:
                if not isinstance(n, str) or not n:
                    raise SchemaError(f"invalid {kind[:-1]} name {n!r}", str(n))
        bad = [o for o in self.objects if "_" in o]
        if bad:
            # tokens are OBJECT_ACTION and split on the first underscore
            raise SchemaError(f"object name {bad[0]!r} contains '_'", bad[0])

    @property
    def pairs(self) -> list[str]:
        return [f"{o}_{a}" for o in self.objects for a in self.actions]

    def to_json(self) -> str:
        return json.dumps({"objects": list(self.objects), "actions": list(self.actions)})

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSchema":
        try:
            return cls(tuple(d["objects"]), tuple(d["actions"]))
        except (KeyError, TypeError) as e:
            raise SchemaError(f"schema needs 'objects' and 'actions' lists ({e})") from None


# OpTC-like: 4 objects x 8 actions = 32 object-action pairs.
OPTC_SCHEMA = DatasetSchema(
    ("PROCESS", "FILE", "FLOW", "SHELL"),
    ("CREATE", "OPEN", "READ", "MODIFY", "DELETE", "RENAME", "MESSAGE", "COMMAND"),
)

# TC E3 exposes event types only; they become actions of a single object.
TC_E3_SCHEMA = DatasetSchema(
    ("EVENT",),
    (
        "READ", "WRITE", "OPEN", "CLOSE", "CONNECT", "ACCEPT", "SENDTO", "RECVFROM",
        "SENDMSG", "RECVMSG", "MODIFY", "EXECUTE", "MMAP", "FORK", "CREATE",
        "UNLINK", "RENAME",
    ),
)


@dataclass(frozen=True)
class RawEvent:
    event_id: str
    actor_id: str
    object_id: str
    object: str
    action: str
    timestamp: float
    host: str = ""

    @property
    def token(self) -> str:
        return f"{self.object}_{self.action}"

    @property
    def sort_key(self) -> tuple[float, str]:
        return (self.timestamp, self.event_id)

    def to_record(self) -> dict:
        return {
            "id": self.event_id,
            "actor_id": self.actor_id,
            "object_id": self.object_id,
            "object": self.object,
            "action": self.action,
            "ts": self.timestamp,
            "host": self.host,
        }


@dataclass
class LabelSet:
    malicious_event_ids: frozenset[str] = frozenset()
    duplicates: int = 0
    skipped_lines: list[int] = field(default_factory=list)

    def __contains__(self, event_id: str) -> bool:
        return event_id in self.malicious_event_ids

    def __len__(self) -> int:
        return len(self.malicious_event_ids)

    def __iter__(self) -> Iterator[str]:
        return iter(self.malicious_event_ids)

    def union(self, ids: Iterable[str]) -> "LabelSet":
        return LabelSet(self.malicious_event_ids | frozenset(ids))


def _lines(source: Source) -> Iterator[str]:
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    elif isinstance(source, str):
        source = io.StringIO(source)
    for raw in source:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield raw.rstrip("\r\n")


def _event_from_record(rec: dict, schema: DatasetSchema, line_no: int) -> RawEvent:
    missing = [f for f in EVENT_FIELDS if f not in rec]
    if missing:
        raise ParseError(line_no, f"missing field(s) {', '.join(missing)}")
    ts = rec["ts"]
    if isinstance(ts, bool) or not isinstance(ts, (int, float)):
        raise ParseError(line_no, f"'ts' must be a number, got {ts!r}")
    ts = float(ts)
    if not math.isfinite(ts) or ts < 0:
        raise ParseError(line_no, f"'ts' must be finite and >= 0, got {ts!r}")
    eid = rec["id"]
    if not isinstance(eid, str) or not eid:
        raise ParseError(line_no, "'id' must be a non-empty string")
    if rec["object"] not in schema.objects:
        raise SchemaError(f"object {rec['object']!r} not in schema", str(rec["object"]), line_no)
    if rec["action"] not in schema.actions:
        raise SchemaError(f"action {rec['action']!r} not in schema", str(rec["action"]), line_no)
    return RawEvent(
        event_id=eid,
        actor_id=str(rec["actor_id"]),
        object_id=str(rec["object_id"]),
        object=rec["object"],
        action=rec["action"],
        timestamp=ts,
        host=str(rec["host"]),
    )


def parse_events(
    source: Source,
    schema: DatasetSchema,
    lenient: bool = False,
    errors: list[ParseError] | None = None,
) -> list[RawEvent]:
    """Parse a JSON-lines event stream into events sorted by (timestamp, id).

    Malformed lines raise :class:`ParseError` unless ``lenient`` is set, in
    which case they are logged, appended to ``errors`` and skipped. Schema
    violations always raise.
    """
    events: list[RawEvent] = []
    seen: set[str] = set()
    for line_no, line in enumerate(_lines(source), start=1):
        if not line.strip():
            continue
        try:
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(line_no, f"invalid JSON ({e.msg})") from None
            if not isinstance(rec, dict):
                raise ParseError(line_no, "record is not a JSON object")
            ev = _event_from_record(rec, schema, line_no)
            if ev.event_id in seen:
                raise ParseError(line_no, f"duplicate event id {ev.event_id!r}")
        except ParseError as e:
            if not lenient:
                raise
            logger.warning("skipping %s", e)
            if errors is not None:
                errors.append(e)
            continue
        seen.add(ev.event_id)
        events.append(ev)
    events.sort(key=lambda e: e.sort_key)
    return events


def parse_labels(source: Source) -> LabelSet:
    """Read malicious ids; format (plain or JSON-lines) is chosen by the first non-empty line."""
    ids: set[str] = set()
    duplicates = 0
    skipped: list[int] = []
    json_mode: bool | None = None
    for line_no, line in enumerate(_lines(source), start=1):
        text = line.strip()
        if json_mode is None:
            if not text:
                continue
            json_mode = text.startswith("{")
        if json_mode:
            if not text:
                skipped.append(line_no)
                continue
            try:
                eid = json.loads(text).get("id")
            except (json.JSONDecodeError, AttributeError):
                raise ParseError(line_no, "expected a JSON object with an 'id' field") from None
            eid = "" if eid is None else str(eid)
        else:
            eid = text
        if not eid:
            skipped.append(line_no)
            continue
        if eid in ids:
            duplicates += 1
        ids.add(eid)
    if duplicates:
        logger.info("label file: %d duplicate id(s) ignored", duplicates)
    if skipped:
        logger.warning("label file: empty id on line(s) %s", skipped)
    return LabelSet(frozenset(ids), duplicates, skipped)


def load_schema(source: Source) -> DatasetSchema:
    text = "\n".join(_lines(source))
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"schema file is not valid JSON ({e.msg})") from None
    if not isinstance(d, dict):
        raise SchemaError("schema file must hold a JSON object")
    return DatasetSchema.from_dict(d)


def format_events(events: Iterable[RawEvent]) -> str:
    return "".join(json.dumps(e.to_record()) + "\n" for e in events)


def write_events(path, events: Iterable[RawEvent]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_events(events))


def write_labels(path, ids: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for eid in sorted(ids):
            f.write(eid + "\n")
