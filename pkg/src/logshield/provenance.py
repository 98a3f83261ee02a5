"""Provenance tree construction from an ordered event log.

The parent of an event ``v`` is the first event (in ``(timestamp, id)``
order) whose ``object_id`` equals ``v.actor_id``: the event that created or
touched the entity now acting. Events without such a predecessor are roots,
so a log generally yields a forest.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .events import LabelSet, RawEvent


class StructureError(ValueError):
    """Raised when a child-to-parent mapping does not fit the event set."""


@dataclass(frozen=True)
class ProvenanceNode:
    id: str
    object: str
    action: str
    time_delta: float
    timestamp: float
    children: tuple[str, ...] = ()
    malicious: bool = False
    host: str = ""

    @property
    def token(self) -> str:
        return f"{self.object}_{self.action}"


@dataclass(frozen=True)
class ProvenanceTree:
    nodes: Mapping[str, ProvenanceNode]
    roots: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class BackTree:
    parent_of: Mapping[str, str]
    nodes: Mapping[str, ProvenanceNode]
    malicious_ids: frozenset[str] = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.nodes)

    def chain(self, event_id: str) -> list[str]:
        """Ids from the root down to ``event_id``."""
        out = [event_id]
        cur = self.parent_of.get(event_id)
        while cur is not None:
            out.append(cur)
            cur = self.parent_of.get(cur)
        out.reverse()
        return out


def build_cp_mapping(events: Sequence[RawEvent]) -> dict[str, str]:
    """Child id -> parent id, in one pass over time-ordered events.

    Only events strictly before ``v`` in ``(timestamp, id)`` order are parent
    candidates, which rules out both self-parenting and cycles between
    simultaneous events.
    """
    first_with_object: dict[str, str] = {}
    cp: dict[str, str] = {}
    prev_key = None
    for ev in events:
        key = ev.sort_key
        if prev_key is not None and key < prev_key:
            raise ValueError("events must be sorted by (timestamp, event_id)")
        prev_key = key
        parent = first_with_object.get(ev.actor_id)
        if parent is not None:
            cp[ev.event_id] = parent
        first_with_object.setdefault(ev.object_id, ev.event_id)
    return cp


def build_tree(
    events: Sequence[RawEvent],
    cp: Mapping[str, str],
    labels: LabelSet | Iterable[str] = (),
) -> ProvenanceTree:
    by_id = {ev.event_id: ev for ev in events}
    malicious = labels if isinstance(labels, LabelSet) else frozenset(labels)
    children: dict[str, list[RawEvent]] = {eid: [] for eid in by_id}
    for child, parent in cp.items():
        if child not in by_id:
            raise StructureError(f"mapping references unknown child {child!r}")
        if parent not in by_id:
            raise StructureError(f"mapping references unknown parent {parent!r} (of {child!r})")
        if child == parent:
            raise StructureError(f"event {child!r} is its own parent")
        children[parent].append(by_id[child])

    nodes: dict[str, ProvenanceNode] = {}
    roots = []
    for ev in events:
        parent = cp.get(ev.event_id)
        if parent is None:
            delta = 0.0
            roots.append(ev.event_id)
        else:
            delta = ev.timestamp - by_id[parent].timestamp
            if delta < 0:
                raise StructureError(f"edge {parent!r} -> {ev.event_id!r} goes back in time")
        kids = sorted(children[ev.event_id], key=lambda e: e.sort_key)
        nodes[ev.event_id] = ProvenanceNode(
            id=ev.event_id,
            object=ev.object,
            action=ev.action,
            time_delta=delta,
            timestamp=ev.timestamp,
            children=tuple(k.event_id for k in kids),
            malicious=ev.event_id in malicious,
            host=ev.host,
        )
    return ProvenanceTree(nodes, tuple(roots))


def build_back_tree(tree: ProvenanceTree) -> BackTree:
    parent_of: dict[str, str] = {}
    for node in tree.nodes.values():
        for c in node.children:
            parent_of[c] = node.id
    # keep the event order of the tree so traversal seeds are reproducible
    parent_of = {nid: parent_of[nid] for nid in tree.nodes if nid in parent_of}
    malicious = frozenset(n.id for n in tree.nodes.values() if n.malicious)
    return BackTree(parent_of, tree.nodes, malicious)


def tree_from_events(events: Sequence[RawEvent], labels: LabelSet | Iterable[str] = ()) -> ProvenanceTree:
    return build_tree(events, build_cp_mapping(events), labels)


def dump_records(back: BackTree) -> list[dict]:
    return [
        {
            "id": n.id,
            "parent": back.parent_of.get(n.id),
            "object": n.object,
            "action": n.action,
            "t_delta": n.time_delta,
            "malicious": n.malicious,
            "ts": n.timestamp,
            "host": n.host,
        }
        for n in back.nodes.values()
    ]


def write_tree(path, back: BackTree) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in dump_records(back):
            f.write(json.dumps(rec) + "\n")


def read_tree(path) -> BackTree:
    """Rebuild a back-tree from a tree dump; file order is kept as node order."""
    recs = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                recs.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise StructureError(f"line {line_no}: invalid JSON ({e.msg})") from None
    ids = set()
    children: dict[str, list[str]] = {}
    for r in recs:
        ids.add(r["id"])
        if r.get("parent") is not None:
            children.setdefault(r["parent"], []).append(r["id"])
    nodes = {}
    parent_of = {}
    for r in recs:
        p = r.get("parent")
        if p is not None:
            if p not in ids:
                raise StructureError(f"node {r['id']!r} has unknown parent {p!r}")
            parent_of[r["id"]] = p
        nodes[r["id"]] = ProvenanceNode(
            id=r["id"],
            object=r["object"],
            action=r["action"],
            time_delta=float(r["t_delta"]),
            timestamp=float(r.get("ts", 0.0)),
            children=tuple(children.get(r["id"], ())),
            malicious=bool(r.get("malicious", False)),
            host=str(r.get("host", "")),
        )
    malicious = frozenset(n.id for n in nodes.values() if n.malicious)
    return BackTree(parent_of, nodes, malicious)
