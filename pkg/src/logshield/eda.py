"""Exploratory statistics over events or traces, emitted as CSV-ready tables.

A *population* is a list of :class:`Observation` rows (object, action,
delta, label). It can come from provenance nodes (each event carries its
own label) or from traces (every event inherits the trace label).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .events import DatasetSchema
from .provenance import BackTree, ProvenanceTree
from .traces import MALICIOUS, Trace


class Observation(NamedTuple):
    object: str
    action: str
    delta: float
    label: int


def event_population(tree: ProvenanceTree | BackTree, include_roots: bool = True) -> list[Observation]:
    parent_of = tree.parent_of if isinstance(tree, BackTree) else None
    out = []
    for n in tree.nodes.values():
        if not include_roots and parent_of is not None and n.id not in parent_of:
            continue
        out.append(Observation(n.object, n.action, n.time_delta, int(n.malicious)))
    return out


def trace_population(traces: Iterable[Trace]) -> list[Observation]:
    out = []
    for t in traces:
        for e in t.content:
            obj, act = e.token.split("_", 1)
            out.append(Observation(obj, act, float(e.time_delta), int(t.label)))
    return out


# -- object/action frequencies ---------------------------------------------------

@dataclass
class FrequencyMatrix:
    objects: tuple[str, ...]
    actions: tuple[str, ...]
    counts: np.ndarray   # (objects, actions) int

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def percentages(self) -> np.ndarray:
        if self.total == 0:
            return np.zeros_like(self.counts, dtype=float)
        return 100.0 * self.counts / self.total

    def object_percentages(self) -> dict[str, float]:
        p = self.percentages.sum(axis=1)
        return dict(zip(self.objects, p.tolist()))

    def action_percentages(self) -> dict[str, float]:
        p = self.percentages.sum(axis=0)
        return dict(zip(self.actions, p.tolist()))

    def to_csv(self, percent: bool = False) -> str:
        vals = self.percentages if percent else self.counts
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["object", *self.actions])
        for i, o in enumerate(self.objects):
            w.writerow([o, *[f"{v:.6f}" if percent else int(v) for v in vals[i]]])
        return buf.getvalue()


def object_action_matrix(population: Sequence[Observation], schema: DatasetSchema):
    """Benign and malicious object x action count matrices."""
    oi = {o: i for i, o in enumerate(schema.objects)}
    ai = {a: i for i, a in enumerate(schema.actions)}
    mats = {c: np.zeros((len(oi), len(ai)), dtype=np.int64) for c in (0, 1)}
    for ob in population:
        mats[ob.label][oi[ob.object], ai[ob.action]] += 1
    return (FrequencyMatrix(schema.objects, schema.actions, mats[0]),
            FrequencyMatrix(schema.objects, schema.actions, mats[1]))


def comparison_csv(benign: FrequencyMatrix, malicious: FrequencyMatrix, axis: str) -> str:
    """Per-object or per-action percentage in each class, side by side."""
    if axis == "object":
        b, m = benign.object_percentages(), malicious.object_percentages()
    elif axis == "action":
        b, m = benign.action_percentages(), malicious.action_percentages()
    else:
        raise ValueError("axis must be 'object' or 'action'")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([axis, "benign_pct", "malicious_pct"])
    for k in b:
        w.writerow([k, f"{b[k]:.6f}", f"{m[k]:.6f}"])
    return buf.getvalue()


# -- time deltas -------------------------------------------------------------------

@dataclass
class DeltaHistogram:
    edges: np.ndarray
    counts: dict[int, np.ndarray]
    means: dict[int, float | None]   # None when the class is empty

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "benign", "malicious"])
        for k in range(len(self.edges) - 1):
            w.writerow([f"{self.edges[k]:g}", f"{self.edges[k + 1]:g}",
                        int(self.counts[0][k]), int(self.counts[1][k])])
        for c, name in ((0, "benign"), (1, "malicious")):
            m = self.means[c]
            w.writerow([f"mean_{name}", "", "" if m is None else f"{m:.6f}", ""])
        return buf.getvalue()


def time_delta_histogram(population: Sequence[Observation], edges: Sequence[float]) -> DeltaHistogram:
    """Per-class delta counts per bin (right edge of the last bin included)."""
    e = np.asarray(edges, dtype=float)
    if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
        raise ValueError("bin edges must be strictly increasing with at least two values")
    counts, means = {}, {}
    for c in (0, 1):
        d = np.array([o.delta for o in population if o.label == c], dtype=float)
        counts[c] = np.histogram(d, bins=e)[0]
        means[c] = float(d.mean()) if d.size else None
    return DeltaHistogram(e, counts, means)


# -- mutual information ----------------------------------------------------------

@dataclass
class ContingencyTable:
    x_values: list
    y_values: list
    joint: np.ndarray  # (|x|, |y|) counts

    @classmethod
    def from_samples(cls, x: Sequence, y: Sequence) -> "ContingencyTable":
        if len(x) != len(y):
            raise ValueError("feature and target lengths differ")
        if len(x) == 0:
            raise ValueError("need at least one sample")
        xv, xi = np.unique(np.asarray(x), return_inverse=True)
        yv, yi = np.unique(np.asarray(y), return_inverse=True)
        joint = np.zeros((xv.size, yv.size), dtype=np.int64)
        np.add.at(joint, (xi, yi), 1)
        return cls(xv.tolist(), yv.tolist(), joint)

    @property
    def p_xy(self) -> np.ndarray:
        return self.joint / self.joint.sum()

    @property
    def p_x(self) -> np.ndarray:
        return self.p_xy.sum(axis=1)

    @property
    def p_y(self) -> np.ndarray:
        return self.p_xy.sum(axis=0)


def mutual_information_table(table: ContingencyTable | np.ndarray, base: float = 2.0) -> float:
    """Plug-in MI of a joint count (or probability) table; zero cells contribute nothing."""
    joint = table.joint if isinstance(table, ContingencyTable) else np.asarray(table, dtype=float)
    total = joint.sum()
    if total <= 0:
        raise ValueError("contingency table is empty")
    pxy = joint / total
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    ratio = pxy[nz] / (px @ py)[nz]
    mi = float(np.sum(pxy[nz] * np.log(ratio)) / math.log(base))
    return max(mi, 0.0)


def mutual_information(x: Sequence, y: Sequence, base: float = 2.0) -> float:
    """MI between a discrete feature and a discrete target, in bits by default."""
    return mutual_information_table(ContingencyTable.from_samples(x, y), base)


def object_presence(population: Sequence[Observation], schema: DatasetSchema) -> dict[str, list[int]]:
    return {o: [int(ob.object == o) for ob in population] for o in schema.objects}


def action_presence(population: Sequence[Observation], schema: DatasetSchema) -> dict[str, list[int]]:
    return {a: [int(ob.action == a) for ob in population] for a in schema.actions}


def trace_contains(traces: Sequence[Trace], schema: DatasetSchema, unit: str = "pair") -> dict[str, list[int]]:
    """Per-trace binary indicators: does the trace contain this pair / object / action."""
    feats: dict[str, list[int]] = {}
    keys = {"pair": schema.pairs, "object": schema.objects, "action": schema.actions}[unit]
    for t in traces:
        present = set()
        for e in t.content:
            obj, act = e.token.split("_", 1)
            present.add({"pair": e.token, "object": obj, "action": act}[unit])
        for k in keys:
            feats.setdefault(k, []).append(int(k in present))
    return feats


def mi_rows(features: dict[str, list[int]], target: Sequence[int], base: float = 2.0) -> list[dict]:
    unit = "bits" if base == 2.0 else ("nats" if base == math.e else f"log{base:g}")
    return [{"feature": k, "mi": mutual_information(v, target, base), "unit": unit}
            for k, v in features.items()]


def mi_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    unit = rows[0]["unit"] if rows else "bits"
    w.writerow(["feature", f"MI_{unit}"])
    for r in rows:
        w.writerow([r["feature"], f"{r['mi']:.12g}"])
    return buf.getvalue()


def population_labels(population: Sequence[Observation]) -> list[int]:
    return [ob.label for ob in population]


def malicious_share(traces: Sequence[Trace]) -> float:
    return sum(t.label == MALICIOUS for t in traces) / max(len(traces), 1)
