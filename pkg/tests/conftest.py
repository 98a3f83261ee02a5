import numpy as np
import pytest

from logshield.events import OPTC_SCHEMA, RawEvent


def random_log(rng: np.random.Generator, n: int, n_entities: int | None = None, grid: float = 0.125):
    """Random event log whose actors and objects share a small id pool.

    Timestamps sit on a dyadic grid so time differences are exact in floating point.
    """
    n_entities = n_entities or max(2, n // 3)
    objs, acts = OPTC_SCHEMA.objects, OPTC_SCHEMA.actions
    events = []
    for i in range(n):
        events.append(RawEvent(
            event_id=f"e{i:05d}",
            actor_id=f"p{rng.integers(n_entities)}",
            object_id=f"p{rng.integers(n_entities)}",
            object=objs[rng.integers(len(objs))],
            action=acts[rng.integers(len(acts))],
            timestamp=float(rng.integers(0, max(4, n // 2))) * grid,
            host="h0",
        ))
    events.sort(key=lambda e: e.sort_key)
    return events


def brute_force_cp(events):
    """Parent of v: the earliest u before v in (timestamp, id) order with u.object_id == v.actor_id."""
    cp = {}
    for v in events:
        best = None
        for u in events:
            if u.sort_key < v.sort_key and u.object_id == v.actor_id:
                if best is None or u.sort_key < best.sort_key:
                    best = u
        if best is not None:
            cp[v.event_id] = best.event_id
    return cp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, filled in by test_acceptance.py and
# printed at the end of the session regardless of output capturing.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
