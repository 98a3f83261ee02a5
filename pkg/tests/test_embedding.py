import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logshield.embedding import (
    DTC_ID,
    END_ID,
    IGNORE,
    MASK_ID,
    PAD_ID,
    EncodingError,
    TemporalConfig,
    Vocabulary,
    apply_mask,
    assign_slots,
    embed,
    embed_backward,
    encode,
    encode_unmasked,
    init_embedding,
)
from logshield.events import OPTC_SCHEMA, TC_E3_SCHEMA
from logshield.traces import Trace, TraceConfig, TraceEvent, finalize_trace

VOCAB = Vocabulary.from_schema(OPTC_SCHEMA)


def slot_oracle(deltas, window):
    """Exact rational arithmetic: cumulative time, 1-based window index, divided by the last index."""
    t, slots = Fraction(0), []
    for d in deltas:
        t += Fraction(d)
        slots.append(math.floor(t / Fraction(window)) + 1)
    return [Fraction(s, slots[-1]) for s in slots]


def make_trace(tokens, deltas, label=0, max_length=8):
    evs = tuple(TraceEvent(t, d, f"e{i}") for i, (t, d) in enumerate(zip(tokens, deltas)))
    return finalize_trace(Trace(evs, label, f"e{len(evs) - 1}"), TraceConfig(max_length=max_length))


def test_vocabulary_layout():
    assert VOCAB.tokens[:4] == ("[PAD]", "[DTC]", "[END]", "[MASK]")
    assert (PAD_ID, DTC_ID, END_ID, MASK_ID) == (0, 1, 2, 3)
    assert len(VOCAB) == 36
    assert len(Vocabulary.from_schema(TC_E3_SCHEMA)) == 21
    assert Vocabulary.from_json(VOCAB.to_json()) == VOCAB
    with pytest.raises(EncodingError):
        VOCAB.id("FILE_EXPLODE")


def test_slot_worked_example():
    # deltas of events at 1, 1.5, 2.5 and 5 seconds
    assert assign_slots([1.0, 0.5, 1.0, 2.5], 2.0).tolist() == [1 / 3, 1 / 3, 2 / 3, 1.0]


def test_slot_edge_cases():
    assert assign_slots([0.0], 2.0).tolist() == [1.0]
    assert assign_slots([0.0, 0.0, 0.0], 1.0).tolist() == [1.0, 1.0, 1.0]
    # boundary: t == w starts the next slot
    assert assign_slots([0.0, 2.0], 2.0).tolist() == [0.5, 1.0]
    with pytest.raises(ValueError):
        assign_slots([1.0, -0.5], 2.0)
    with pytest.raises(ValueError):
        assign_slots([], 2.0)
    with pytest.raises(ValueError):
        assign_slots([1.0], 0.0)
    with pytest.raises(ValueError):
        TemporalConfig(window_seconds=-1.0)


_dyadic = st.integers(0, 64).map(lambda k: k / 8)


@settings(max_examples=200, deadline=None)
@given(st.lists(_dyadic, min_size=1, max_size=20), st.sampled_from([0.25, 0.5, 1.0, 2.0, 3.0]))
def test_slots_match_oracle(deltas, window):
    got = assign_slots(deltas, window)
    want = slot_oracle(deltas, window)
    assert got.tolist() == [float(x) for x in want]
    assert np.all(np.diff(got) >= 0) and got[-1] == 1.0 and np.all(got > 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(_dyadic, min_size=1, max_size=20), st.sampled_from([0.5, 1.0, 2.0]), st.sampled_from([2.0, 4.0, 0.5]))
def test_slots_scale_covariant(deltas, window, c):
    a = assign_slots(deltas, window)
    b = assign_slots([d * c for d in deltas], window * c)
    assert a.tolist() == b.tolist()


def test_encode_layout():
    t = make_trace(["PROCESS_CREATE", "FILE_READ", "FLOW_MESSAGE"], [0.0, 1.0, 3.0], label=1, max_length=6)
    b = encode_unmasked([t], VOCAB, TemporalConfig(2.0))
    assert b.seq_len == 8
    assert b.token_ids[0].tolist() == [DTC_ID, VOCAB.id("PROCESS_CREATE"), VOCAB.id("FILE_READ"),
                                       VOCAB.id("FLOW_MESSAGE"), END_ID, PAD_ID, PAD_ID, PAD_ID]
    assert b.attention_mask[0].tolist() == [True] * 5 + [False] * 3
    assert b.slot_values[0].tolist() == [0.0, 1 / 3, 1 / 3, 1.0, 0.0, 0.0, 0.0, 0.0]
    assert (b.mlm_targets == IGNORE).all()
    assert b.labels.tolist() == [1]
    assert b.eligible[0].tolist() == [False, True, True, True, False, False, False, False]


def test_encode_rejects_unknown_token_and_ragged():
    t = make_trace(["REGISTRY_READ"], [0.0])
    with pytest.raises(EncodingError):
        encode_unmasked([t], VOCAB, TemporalConfig())
    a = make_trace(["FILE_READ"], [0.0], max_length=4)
    b = make_trace(["FILE_READ"], [0.0], max_length=5)
    with pytest.raises(EncodingError):
        encode_unmasked([a, b], VOCAB, TemporalConfig())


def test_trimmed_drops_all_pad_columns():
    a = make_trace(["FILE_READ"] * 2, [0.0, 1.0], max_length=10)
    b = make_trace(["FILE_READ"] * 4, [0.0, 1.0, 1.0, 1.0], max_length=10)
    batch = encode_unmasked([a, b], VOCAB, TemporalConfig())
    t = batch.trimmed()
    assert t.seq_len == 6
    assert (t.token_ids == batch.token_ids[:, :6]).all()


def test_masking_only_touches_content():
    rng = np.random.default_rng(0)
    traces = [make_trace(["FILE_READ", "FILE_OPEN", "PROCESS_CREATE"], [0.0, 1.0, 2.0], max_length=5)] * 50
    base = encode_unmasked(traces, VOCAB, TemporalConfig())
    m = apply_mask(base, 0.15, rng)
    masked = m.token_ids == MASK_ID
    assert not (masked & ~base.eligible).any()
    assert (m.mlm_targets[masked] == base.token_ids[masked]).all()
    assert (m.mlm_targets[~masked] == IGNORE).all()
    assert (m.token_ids[~masked] == base.token_ids[~masked]).all()
    assert masked.any(axis=1).all()          # every row has at least one mask


def test_mask_rate_and_dynamic_redraw():
    rng = np.random.default_rng(1)
    trace = make_trace(["FILE_READ"] * 30, [0.5] * 30, max_length=30)
    base = encode_unmasked([trace] * 400, VOCAB, TemporalConfig())
    m1 = apply_mask(base, 0.15, rng)
    m2 = apply_mask(base, 0.15, rng)
    rate = (m1.token_ids == MASK_ID).sum() / base.eligible.sum()
    assert 0.13 <= rate <= 0.17
    assert not np.array_equal(m1.token_ids, m2.token_ids)


def test_single_event_trace_always_masked():
    rng = np.random.default_rng(2)
    t = make_trace(["SHELL_COMMAND"], [0.0], max_length=3)
    for _ in range(20):
        b = encode(t, VOCAB, TemporalConfig(), rng=rng)
        assert b.token_ids[0, 1] == MASK_ID
        assert b.mlm_targets[0, 1] == VOCAB.id("SHELL_COMMAND")


def test_debug_records_are_json():
    t = make_trace(["FILE_READ", "FILE_OPEN"], [0.0, 1.0])
    recs = encode(t, VOCAB, TemporalConfig(), rng=np.random.default_rng(0)).to_records()
    assert set(json.loads(json.dumps(recs[0]))) == {"token_ids", "slot_values", "mlm_targets", "label"}


def test_embedding_sums_token_and_slot():
    rng = np.random.default_rng(3)
    params = init_embedding(len(VOCAB), 5, rng)
    ids = np.array([[1, 7, 9, 2]])
    slots = np.array([[0.0, 0.5, 1.0, 0.0]])
    out = embed(ids, slots, params)
    for j in range(4):
        want = params["emb.token"][ids[0, j]] + slots[0, j] * params["emb.slot_w"] + params["emb.slot_b"]
        np.testing.assert_allclose(out[0, j], want, rtol=0, atol=1e-15)
    plain = init_embedding(len(VOCAB), 5, np.random.default_rng(3), temporal=False)
    assert set(plain) == {"emb.token"}
    np.testing.assert_array_equal(embed(ids, slots, plain), plain["emb.token"][ids])


def test_embedding_gradient_finite_differences():
    rng = np.random.default_rng(4)
    params = init_embedding(10, 3, rng, std=0.5)
    params["emb.slot_b"] = rng.normal(size=3)
    ids = rng.integers(0, 10, size=(2, 5))
    slots = rng.random((2, 5))
    w = rng.normal(size=(2, 5, 3))

    def f():
        return float((embed(ids, slots, params) * w).sum())

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    embed_backward(w, ids, slots, params, grads)
    eps = 1e-6
    for k, p in params.items():
        num = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + eps
            up = f()
            p[i] = old - eps
            dn = f()
            p[i] = old
            num[i] = (up - dn) / (2 * eps)
        np.testing.assert_allclose(grads[k], num, atol=1e-8)
