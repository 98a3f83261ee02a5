import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logshield.events import (
    OPTC_SCHEMA,
    TC_E3_SCHEMA,
    DatasetSchema,
    ParseError,
    RawEvent,
    SchemaError,
    format_events,
    load_schema,
    parse_events,
    parse_labels,
)


def line(eid, ts, action="READ", obj="FILE", actor="a", target="o", host="h", **extra):
    rec = {"id": eid, "actor_id": actor, "object_id": target, "object": obj,
           "action": action, "ts": ts, "host": host, **extra}
    return json.dumps(rec) + "\n"


def test_empty_stream():
    assert parse_events(b"", OPTC_SCHEMA) == []


def test_sorted_by_timestamp():
    src = (line("e1", 5.0) + line("e2", 1.0) + line("e3", 3.0)).encode()
    evs = parse_events(src, OPTC_SCHEMA)
    assert [e.timestamp for e in evs] == [1.0, 3.0, 5.0]


def test_ties_broken_by_id():
    src = line("b", 1.0) + line("a", 1.0) + line("c", 0.5)
    assert [e.event_id for e in parse_events(src, OPTC_SCHEMA)] == ["c", "a", "b"]


def test_unknown_action_names_value():
    with pytest.raises(SchemaError) as ei:
        parse_events(line("e1", 1.0, action="FROB"), OPTC_SCHEMA)
    assert "FROB" in str(ei.value)
    assert ei.value.value == "FROB"


def test_unknown_object_is_error():
    with pytest.raises(SchemaError, match="REGISTRY"):
        parse_events(line("e1", 1.0, obj="REGISTRY"), OPTC_SCHEMA)


def test_malformed_line_reports_line_number():
    src = line("e1", 1.0) + "{not json\n" + line("e2", 2.0)
    with pytest.raises(ParseError) as ei:
        parse_events(src, OPTC_SCHEMA)
    assert ei.value.line_no == 2


def test_lenient_skips_malformed_lines():
    src = line("e1", 1.0) + "{not json\n" + '{"id": "x"}\n' + line("e2", 2.0)
    errors = []
    evs = parse_events(src, OPTC_SCHEMA, lenient=True, errors=errors)
    assert [e.event_id for e in evs] == ["e1", "e2"]
    assert [e.line_no for e in errors] == [2, 3]


@pytest.mark.parametrize("ts", ["1.0", -1.0, None, True])
def test_bad_timestamps(ts):
    with pytest.raises(ParseError):
        parse_events(line("e1", ts), OPTC_SCHEMA)


def test_duplicate_event_id_rejected():
    with pytest.raises(ParseError, match="duplicate"):
        parse_events(line("e1", 1.0) + line("e1", 2.0), OPTC_SCHEMA)


def test_extra_fields_ignored():
    evs = parse_events(line("e1", 1.0, extra_field=[1, 2]), OPTC_SCHEMA)
    assert evs[0] == RawEvent("e1", "a", "o", "FILE", "READ", 1.0, "h")


def test_accepts_file_objects_and_text():
    text = line("e1", 2.0) + line("e2", 1.0)
    a = parse_events(io.BytesIO(text.encode()), OPTC_SCHEMA)
    b = parse_events(io.StringIO(text), OPTC_SCHEMA)
    assert a == b == parse_events(text, OPTC_SCHEMA)


def test_tc_e3_schema_single_object():
    assert TC_E3_SCHEMA.objects == ("EVENT",)
    assert len(TC_E3_SCHEMA.actions) == 17
    evs = parse_events(line("e1", 1.0, obj="EVENT", action="MMAP"), TC_E3_SCHEMA)
    assert evs[0].token == "EVENT_MMAP"


def test_optc_schema_pairs():
    assert len(OPTC_SCHEMA.objects) == 4 and len(OPTC_SCHEMA.actions) == 8
    assert len(OPTC_SCHEMA.pairs) == 32


@pytest.mark.parametrize("objects,actions", [((), ("A",)), (("X",), ()), (("X", "X"), ("A",)), (("X_Y",), ("A",))])
def test_schema_invariants(objects, actions):
    with pytest.raises(SchemaError):
        DatasetSchema(objects, actions)


def test_schema_file_round_trip():
    assert load_schema(OPTC_SCHEMA.to_json()) == OPTC_SCHEMA
    with pytest.raises(SchemaError):
        load_schema('{"objects": ["A"]}')


# -- labels --


def test_labels_plain_with_duplicates():
    ls = parse_labels(b"e1\ne2\ne1\n")
    assert set(ls) == {"e1", "e2"}
    assert ls.duplicates == 1


def test_labels_empty_file():
    ls = parse_labels(b"")
    assert len(ls) == 0 and ls.duplicates == 0


def test_labels_json_lines_and_empty_ids():
    src = '{"id": "e1"}\n{"id": ""}\n\n{"id": "e2"}\n'
    ls = parse_labels(src)
    assert set(ls) == {"e1", "e2"}
    assert ls.skipped_lines == [2, 3]


def test_labels_plain_empty_line_skipped():
    ls = parse_labels("\n\ne1\n\ne2\n")
    assert set(ls) == {"e1", "e2"}
    assert ls.skipped_lines == [4]


def test_labels_ten_thousand_ids():
    ids = [f"id-{i:05d}" for i in range(10_000)]
    ls = parse_labels("\n".join(ids + ids[:10]))
    assert len(ls) == len(set(ids)) == 10_000
    assert ls.duplicates == 10


# -- properties --

_names = st.text(alphabet="abcdef0123456789", min_size=1, max_size=6)
_event = st.builds(
    RawEvent,
    event_id=_names,
    actor_id=_names,
    object_id=_names,
    object=st.sampled_from(OPTC_SCHEMA.objects),
    action=st.sampled_from(OPTC_SCHEMA.actions),
    timestamp=st.floats(min_value=0, max_value=1e9, allow_nan=False),
    host=_names,
)


@settings(max_examples=60, deadline=None)
@given(st.lists(_event, max_size=30, unique_by=lambda e: e.event_id))
def test_round_trip_and_total_order(events):
    text = format_events(events)
    parsed = parse_events(text.encode(), OPTC_SCHEMA)
    assert parsed == sorted(events, key=lambda e: (e.timestamp, e.event_id))
    assert parse_events(format_events(parsed), OPTC_SCHEMA) == parsed
    keys = [e.sort_key for e in parsed]
    assert keys == sorted(keys)
    # determinism: same bytes, same result
    assert parse_events(text.encode(), OPTC_SCHEMA) == parsed
