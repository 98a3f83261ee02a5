"""Event traces: root-to-event chains walked through the back-tree."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .events import LabelSet
from .provenance import BackTree

PAD = "[PAD]"
BENIGN, MALICIOUS = 0, 1


@dataclass(frozen=True)
class TraceEvent:
    token: str
    time_delta: float | None
    event_id: str = ""

    @property
    def is_pad(self) -> bool:
        return self.token == PAD


PAD_EVENT = TraceEvent(PAD, None, "")


@dataclass(frozen=True)
class Trace:
    events: tuple[TraceEvent, ...]
    label: int
    origin_event: str
    host: str = ""

    def __len__(self) -> int:
        return len(self.events)

    @property
    def content(self) -> tuple[TraceEvent, ...]:
        return tuple(e for e in self.events if not e.is_pad)

    @property
    def tokens(self) -> list[str]:
        return [e.token for e in self.events]

    @property
    def deltas(self) -> list[float | None]:
        return [e.time_delta for e in self.events]

    def to_record(self) -> dict:
        return {
            "tokens": self.tokens,
            "deltas": self.deltas,
            "label": int(self.label),
            "origin": self.origin_event,
            "host": self.host,
            "ids": [e.event_id for e in self.events],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Trace":
        tokens = rec["tokens"]
        deltas = rec["deltas"]
        if len(tokens) != len(deltas):
            raise ValueError("trace record: tokens and deltas differ in length")
        ids = rec.get("ids") or [""] * len(tokens)
        events = tuple(
            TraceEvent(t, None if d is None else float(d), i) for t, d, i in zip(tokens, deltas, ids)
        )
        label = int(rec["label"])
        if label not in (BENIGN, MALICIOUS):
            raise ValueError(f"trace record: label must be 0 or 1, got {label}")
        return cls(events, label, str(rec.get("origin", "")), str(rec.get("host", "")))


@dataclass(frozen=True)
class TraceConfig:
    max_length: int = 32
    min_length: int = 2
    seed: int = 0
    per_event_start: bool = True

    def __post_init__(self):
        if self.max_length < 1 or self.min_length < 1:
            raise ValueError("max_length and min_length must be positive")
        if self.min_length > self.max_length:
            raise ValueError("min_length must not exceed max_length")


def label_trace(t: Trace, labels: LabelSet | Iterable[str]) -> int:
    return MALICIOUS if any(e.event_id in labels for e in t.events if not e.is_pad) else BENIGN


def generate_traces(
    back: BackTree,
    cfg: TraceConfig,
    labels: LabelSet | Iterable[str] | None = None,
) -> list[Trace]:
    """Draw start events at random and collect each one's chain up to its root.

    Start events are drawn without replacement. Every event on an emitted
    trace is marked consumed and is never drawn as a start later, though it
    may still show up as an ancestor in other traces. Chains shorter than
    ``cfg.min_length`` are dropped. The result is sorted by origin event.
    """
    if labels is None:
        labels = back.malicious_ids
    elif not isinstance(labels, LabelSet):
        labels = frozenset(labels)
    ids = list(back.nodes)
    if not cfg.per_event_start:
        ids = [i for i in ids if not back.nodes[i].children]
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(ids))
    consumed: set[str] = set()
    traces = []
    for k in order:
        start = ids[k]
        if start in consumed:
            continue
        consumed.add(start)
        chain = back.chain(start)
        if len(chain) < cfg.min_length:
            continue
        consumed.update(chain)
        events = tuple(
            TraceEvent(back.nodes[i].token, back.nodes[i].time_delta, i) for i in chain
        )
        t = Trace(events, BENIGN, start, back.nodes[start].host)
        traces.append(replace(t, label=label_trace(t, labels)))
    traces.sort(key=lambda t: t.origin_event)
    return traces


def finalize_trace(t: Trace, cfg: TraceConfig) -> Trace:
    """Pad with trailing ``[PAD]`` events or keep the last ``max_length`` events."""
    if not t.events:
        raise ValueError("cannot finalize an empty trace")
    content = t.content
    n = cfg.max_length
    if len(content) >= n:
        events = content[len(content) - n:]
    else:
        events = content + (PAD_EVENT,) * (n - len(content))
    return replace(t, events=events)


def write_traces(path, traces: Sequence[Trace]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in traces:
            f.write(json.dumps(t.to_record()) + "\n")


def read_traces(path) -> list[Trace]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                out.append(Trace.from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise ValueError(f"{path}: line {line_no}: {e}") from None
    return out
