from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_log
from logshield.events import RawEvent
from logshield.provenance import build_back_tree, tree_from_events
from logshield.traces import (
    BENIGN,
    MALICIOUS,
    PAD,
    Trace,
    TraceConfig,
    TraceEvent,
    finalize_trace,
    generate_traces,
    read_traces,
    write_traces,
)


def two_branch_tree():
    """10 events: r -> a1 -> a2 -> a3 -> a4 and r -> b1 -> {b2 -> b3, b4 -> b5}.

    Entity names double as object ids; each event's actor is the object of its parent.
    """
    spec = [
        ("r", "root", "R", 0.0, "PROCESS", "CREATE"),
        ("a1", "R", "A1", 1.0, "PROCESS", "CREATE"),
        ("b1", "R", "B1", 1.5, "FILE", "OPEN"),
        ("a2", "A1", "A2", 2.0, "FILE", "READ"),
        ("b2", "B1", "B2", 2.5, "FLOW", "MESSAGE"),
        ("a3", "A2", "A3", 3.0, "FILE", "MODIFY"),
        ("b4", "B1", "B4", 3.5, "SHELL", "COMMAND"),
        ("a4", "A3", "A4", 4.0, "FILE", "DELETE"),
        ("b3", "B2", "B3", 5.0, "FLOW", "READ"),
        ("b5", "B4", "B5", 9.0, "FILE", "RENAME"),
    ]
    evs = [RawEvent(i, a, o, ob, ac, ts, "h") for i, a, o, ts, ob, ac in spec]
    return evs


LEAF_PATHS = [
    ["r", "a1", "a2", "a3", "a4"],
    ["r", "b1", "b2", "b3"],
    ["r", "b1", "b4", "b5"],
]


def ids_of(t):
    return [e.event_id for e in t.content]


def test_leaf_paths_match_enumeration():
    back = build_back_tree(tree_from_events(two_branch_tree(), labels={"b5"}))
    traces = generate_traces(back, TraceConfig(per_event_start=False, seed=7))
    assert Counter(tuple(ids_of(t)) for t in traces) == Counter(tuple(p) for p in LEAF_PATHS)
    labels = {tuple(ids_of(t)): t.label for t in traces}
    assert labels[tuple(LEAF_PATHS[2])] == MALICIOUS
    assert labels[tuple(LEAF_PATHS[0])] == BENIGN
    t = next(t for t in traces if ids_of(t) == LEAF_PATHS[2])
    assert t.tokens == ["PROCESS_CREATE", "FILE_OPEN", "SHELL_COMMAND", "FILE_RENAME"]
    assert t.deltas == [0.0, 1.5, 2.0, 5.5]


def test_per_event_start_fixed_seed():
    """Under a fixed seed the traces are a deterministic set of root prefixes that covers every event."""
    back = build_back_tree(tree_from_events(two_branch_tree()))
    cfg = TraceConfig(seed=7, min_length=1)
    traces = generate_traces(back, cfg)
    assert [ids_of(t) for t in traces] == [ids_of(t) for t in generate_traces(back, cfg)]
    for t in traces:
        assert ids_of(t) == back.chain(t.origin_event)
    covered = {i for t in traces for i in ids_of(t)}
    assert covered == set(back.nodes)
    # each origin is drawn once and never lies on an earlier emitted trace
    assert len({t.origin_event for t in traces}) == len(traces)


def test_min_length_drops_short_chains():
    back = build_back_tree(tree_from_events(two_branch_tree()))
    traces = generate_traces(back, TraceConfig(seed=1, min_length=5, per_event_start=False))
    assert [ids_of(t) for t in traces] == [LEAF_PATHS[0]]


def test_empty_back_tree():
    back = build_back_tree(tree_from_events([]))
    assert generate_traces(back, TraceConfig()) == []


def test_finalize_pads_at_end():
    t = Trace((TraceEvent("FILE_READ", 0.0, "x"), TraceEvent("FILE_OPEN", 1.0, "y")), BENIGN, "y")
    f = finalize_trace(t, TraceConfig(max_length=5))
    assert f.tokens == ["FILE_READ", "FILE_OPEN", PAD, PAD, PAD]
    assert f.deltas[2:] == [None, None, None]
    assert f.label == t.label


def test_finalize_keeps_last_events():
    evs = tuple(TraceEvent(f"FILE_READ", float(i), f"e{i}") for i in range(40))
    f = finalize_trace(Trace(evs, MALICIOUS, "e39"), TraceConfig(max_length=32))
    assert len(f) == 32
    assert [e.event_id for e in f.events] == [f"e{i}" for i in range(8, 40)]
    assert f.label == MALICIOUS


def test_finalize_exact_length_unchanged():
    evs = tuple(TraceEvent("FILE_READ", 0.0, f"e{i}") for i in range(4))
    t = Trace(evs, BENIGN, "e3")
    assert finalize_trace(t, TraceConfig(max_length=4)) == t


def test_record_round_trip(tmp_path):
    back = build_back_tree(tree_from_events(two_branch_tree(), labels={"a4"}))
    cfg = TraceConfig(max_length=6, seed=2)
    traces = [finalize_trace(t, cfg) for t in generate_traces(back, cfg)]
    p = tmp_path / "traces.jsonl"
    write_traces(p, traces)
    assert read_traces(p) == traces


def test_bad_record_reports_line(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text('{"tokens": ["A_B"], "deltas": [0.0], "label": 0}\n{"tokens": ["A_B"], "deltas": [], "label": 0}\n')
    with pytest.raises(ValueError, match="line 2"):
        read_traces(p)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 120), st.integers(1, 8))
def test_trace_invariants(seed, n, max_len):
    rng = np.random.default_rng(seed)
    evs = random_log(rng, n)
    malicious = {e.event_id for e in evs if rng.random() < 0.1}
    back = build_back_tree(tree_from_events(evs, labels=malicious))
    cfg = TraceConfig(max_length=max_len, min_length=1, seed=seed)
    traces = generate_traces(back, cfg)
    # coverage with per-event starts and min_length 1
    assert {i for t in traces for i in ids_of(t)} == set(back.nodes)
    for t in traces:
        chain = ids_of(t)
        # root first, each consecutive pair is a parent edge
        assert chain[0] not in back.parent_of
        assert all(back.parent_of[c] == p for p, c in zip(chain, chain[1:]))
        assert t.label == int(any(i in malicious for i in chain))
        f = finalize_trace(t, cfg)
        assert len(f) == max_len and f.label == t.label
        assert ids_of(f) == chain[-max_len:]
