"""Seeded synthetic host logs: benign process trees plus slow malicious chains.

Every event gets a fresh ``object_id`` and a child's ``actor_id`` is its
parent's ``object_id``, so the provenance parent rule recovers the generated
trees exactly. Malicious chains hang off random benign nodes, draw their
object-action pairs from a skewed mix (or, with probability ``camouflage``,
from the benign mix) and advance the clock with a larger mean delay.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .events import OPTC_SCHEMA, DatasetSchema, RawEvent, format_events


def _norm(d: dict[str, float]) -> dict[str, float]:
    s = sum(d.values())
    return {k: v / s for k, v in d.items()}


BENIGN_OBJECTS = {"PROCESS": 0.45, "FILE": 0.30, "FLOW": 0.15, "SHELL": 0.10}
MALICIOUS_OBJECTS = {"PROCESS": 0.15, "FILE": 0.30, "FLOW": 0.30, "SHELL": 0.25}
BENIGN_ACTIONS = {
    "CREATE": 0.25, "OPEN": 0.25, "READ": 0.25, "MODIFY": 0.07,
    "DELETE": 0.05, "RENAME": 0.03, "MESSAGE": 0.06, "COMMAND": 0.04,
}
MALICIOUS_ACTIONS = {
    "CREATE": 0.08, "OPEN": 0.08, "READ": 0.09, "MODIFY": 0.20,
    "DELETE": 0.15, "RENAME": 0.12, "MESSAGE": 0.14, "COMMAND": 0.14,
}


@dataclass(frozen=True)
class GeneratorConfig:
    n_hosts: int = 3
    benign_trees_per_host: int = 300
    branching: float = 0.35          # mean number of extra children (geometric)
    stop_prob: float = 0.15          # chance a non-root node is a leaf before the cap
    depth_cap: int = 12
    benign_objects: dict = field(default_factory=lambda: dict(BENIGN_OBJECTS))
    benign_actions: dict = field(default_factory=lambda: dict(BENIGN_ACTIONS))
    malicious_objects: dict = field(default_factory=lambda: dict(MALICIOUS_OBJECTS))
    malicious_actions: dict = field(default_factory=lambda: dict(MALICIOUS_ACTIONS))
    camouflage: float = 0.25
    mu_benign: float = 1.0
    mu_malicious: float = 8.0
    malicious_chains_per_host: int = 100
    chain_length: tuple[int, int] = (3, 10)
    time_horizon: float = 86_400.0
    seed: int = 7
    schema: DatasetSchema = OPTC_SCHEMA

    def __post_init__(self):
        if self.mu_malicious <= self.mu_benign:
            raise ValueError("mu_malicious must exceed mu_benign")
        if self.mu_benign <= 0:
            raise ValueError("delays must have positive means")
        if self.n_hosts < 1 or self.benign_trees_per_host < 0 or self.malicious_chains_per_host < 0:
            raise ValueError("host and tree counts must be non-negative (at least one host)")
        if self.depth_cap < 1:
            raise ValueError("depth_cap must be >= 1")
        lo, hi = self.chain_length
        if not 1 <= lo <= hi:
            raise ValueError("chain_length must satisfy 1 <= lo <= hi")
        if not (0 <= self.stop_prob < 1 and 0 <= self.camouflage <= 1 and self.branching >= 0):
            raise ValueError("stop_prob, camouflage or branching out of range")
        for name in ("benign_objects", "malicious_objects"):
            if set(getattr(self, name)) - set(self.schema.objects):
                raise ValueError(f"{name} names objects outside the schema")
        for name in ("benign_actions", "malicious_actions"):
            if set(getattr(self, name)) - set(self.schema.actions):
                raise ValueError(f"{name} names actions outside the schema")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = {"objects": list(self.schema.objects), "actions": list(self.schema.actions)}
        d["chain_length"] = list(self.chain_length)
        return d


@dataclass
class SynthCorpus:
    events: list[RawEvent]
    malicious_ids: set[str]
    chains: list[dict]
    parents: dict[str, str]        # generated child -> parent relation
    schema: DatasetSchema
    config: GeneratorConfig

    @property
    def manifest(self) -> dict:
        return {"chains": self.chains, "n_events": len(self.events),
                "n_malicious": len(self.malicious_ids), "config": self.config.to_dict()}


class _Sampler:
    def __init__(self, probs: dict[str, float]):
        p = _norm(probs)
        self.names = list(p)
        self.p = np.array([p[k] for k in self.names])

    def __call__(self, rng) -> str:
        return self.names[rng.choice(len(self.names), p=self.p)]


def _generate_host(cfg: GeneratorConfig, host: str, rng: np.random.Generator, out: SynthCorpus) -> None:
    b_obj, b_act = _Sampler(cfg.benign_objects), _Sampler(cfg.benign_actions)
    m_obj, m_act = _Sampler(cfg.malicious_objects), _Sampler(cfg.malicious_actions)
    counter = {"e": 0, "o": 0, "a": 0}

    def fresh(kind: str) -> str:
        counter[kind] += 1
        return f"{host}-{kind}{counter[kind]:07d}"

    def make(actor: str, ts: float, obj: str, act: str) -> RawEvent:
        ev = RawEvent(fresh("e"), actor, fresh("o"), obj, act, ts, host)
        out.events.append(ev)
        return ev

    geo_p = 1.0 / (1.0 + cfg.branching)
    benign_nodes: list[RawEvent] = []
    for _ in range(cfg.benign_trees_per_host):
        root = make(fresh("a"), float(rng.uniform(0, cfg.time_horizon)), b_obj(rng), b_act(rng))
        benign_nodes.append(root)
        frontier = [(root, 1)]
        while frontier:
            node, depth = frontier.pop(0)
            if depth >= cfg.depth_cap:
                continue
            if depth > 1 and rng.random() < cfg.stop_prob:
                continue
            n_children = int(rng.geometric(geo_p))
            for _ in range(n_children):
                ts = node.timestamp + float(rng.exponential(cfg.mu_benign))
                child = make(node.object_id, ts, b_obj(rng), b_act(rng))
                out.parents[child.event_id] = node.event_id
                benign_nodes.append(child)
                frontier.append((child, depth + 1))

    lo, hi = cfg.chain_length
    for _ in range(cfg.malicious_chains_per_host if benign_nodes else 0):
        anchor = benign_nodes[int(rng.integers(len(benign_nodes)))]
        ids = []
        prev = anchor
        for _ in range(int(rng.integers(lo, hi + 1))):
            if rng.random() < cfg.camouflage:
                obj, act = b_obj(rng), b_act(rng)
            else:
                obj, act = m_obj(rng), m_act(rng)
            ts = prev.timestamp + float(rng.exponential(cfg.mu_malicious))
            ev = make(prev.object_id, ts, obj, act)
            out.parents[ev.event_id] = prev.event_id
            out.malicious_ids.add(ev.event_id)
            ids.append(ev.event_id)
            prev = ev
        out.chains.append({"host": host, "attach_to": anchor.event_id, "ids": ids})


def generate(cfg: GeneratorConfig) -> SynthCorpus:
    out = SynthCorpus([], set(), [], {}, cfg.schema, cfg)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_hosts)
    for h, ss in enumerate(seeds):
        _generate_host(cfg, f"host{h}", np.random.default_rng(ss), out)
    out.events.sort(key=lambda e: e.sort_key)
    return out


def write_corpus(corpus: SynthCorpus, out_dir) -> dict[str, str]:
    """Write events.jsonl, labels.txt, schema.json and manifest.json; return their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {k: os.path.join(out_dir, f) for k, f in (
        ("events", "events.jsonl"), ("labels", "labels.txt"),
        ("schema", "schema.json"), ("manifest", "manifest.json"))}
    with open(paths["events"], "w", encoding="utf-8") as f:
        f.write(format_events(corpus.events))
    with open(paths["labels"], "w", encoding="utf-8") as f:
        f.writelines(eid + "\n" for eid in sorted(corpus.malicious_ids))
    with open(paths["schema"], "w", encoding="utf-8") as f:
        f.write(corpus.schema.to_json() + "\n")
    with open(paths["manifest"], "w", encoding="utf-8") as f:
        json.dump(corpus.manifest, f, indent=1, sort_keys=True)
    return paths
