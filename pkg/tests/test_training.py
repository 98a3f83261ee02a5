import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logshield.embedding import TemporalConfig, Vocabulary, encode_unmasked
from logshield.events import OPTC_SCHEMA
from logshield.optim import AdamWConfig
from logshield.traces import Trace, TraceConfig, TraceEvent, finalize_trace
from logshield.training import (
    RUN_LOG_COLUMNS,
    ConfusionCounts,
    SamplingPlan,
    TrainConfig,
    TrainingDiverged,
    compute_metrics,
    data_size_sweep,
    downsample,
    evaluate,
    format_imbalance,
    format_run_log,
    format_sweep,
    imbalance_sweep,
    metrics_from_counts,
    split,
    subsample,
    train,
)

VOCAB = Vocabulary.from_schema(OPTC_SCHEMA)


def enumerate_metrics(preds, labels):
    """Independent oracle: walk the pairs once, then apply the textbook formulas."""
    tp = fp = fn = tn = 0
    for p, y in zip(preds, labels):
        if p and y:
            tp += 1
        elif p:
            fp += 1
        elif y:
            fn += 1
        else:
            tn += 1
    pr = tp / (tp + fp) if tp + fp else 0.0
    rc = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * pr * rc / (pr + rc) if pr + rc else 0.0
    return pr, rc, f1, (tp + tn) / len(labels)


def test_metrics_match_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        p, y = rng.integers(0, 2, n), rng.integers(0, 2, n)
        r = compute_metrics(p, y)
        assert (r.precision, r.recall, r.f1, r.accuracy) == enumerate_metrics(p.tolist(), y.tolist())
        assert r.counts.total == n


def test_worked_example():
    r = metrics_from_counts(ConfusionCounts(tp=98, fp=2, fn=1, tn=0))
    assert r.precision == pytest.approx(0.98)
    assert r.recall == pytest.approx(98 / 99)
    assert r.f1 == pytest.approx(196 / 199, rel=1e-15)   # 0.984925...


def test_equal_precision_recall():
    # 19 tp, 1 fp, 1 fn: precision = recall = 0.95
    r = metrics_from_counts(ConfusionCounts(tp=19, fp=1, fn=1, tn=5))
    assert r.precision == r.recall == 0.95
    assert r.f1 == pytest.approx(0.95, abs=1e-15)


def test_degenerate_conventions():
    r = compute_metrics([0, 0, 0], [0, 0, 0])
    assert (r.precision, r.recall, r.f1, r.accuracy) == (0.0, 0.0, 0.0, 1.0)
    r = compute_metrics([1, 1], [0, 0])
    assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        compute_metrics([], [])
    with pytest.raises(ValueError):
        compute_metrics([1], [1, 0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=50))
def test_metric_identities(pairs):
    p, y = zip(*pairs)
    r = compute_metrics(list(p), list(y))
    c = r.counts
    assert r.accuracy == (c.tp + c.tn) / c.total
    assert all(0 <= v <= 1 for v in (r.precision, r.recall, r.f1, r.accuracy))
    if r.precision and r.recall:
        assert min(r.precision, r.recall) - 1e-15 <= r.f1 <= max(r.precision, r.recall) + 1e-15


# -- data handling --

def traces(n, n_mal, length=3):
    out = []
    for i in range(n):
        evs = tuple(TraceEvent("FILE_READ" if i >= n_mal else "SHELL_COMMAND", 1.0, f"t{i}e{k}")
                    for k in range(length))
        out.append(Trace(evs, int(i < n_mal), f"t{i:04d}"))
    return out


def test_split_stratified_exact():
    data = traces(100, 20)
    tr, va, te = split(data, (0.8, 0.1, 0.1), seed=3)
    assert (len(tr), len(va), len(te)) == (80, 10, 10)
    for part in (tr, va, te):
        assert sum(t.label for t in part) / len(part) == 0.2
    ids = [t.origin_event for p in (tr, va, te) for t in p]
    assert sorted(ids) == sorted(t.origin_event for t in data)
    assert split(data, (0.8, 0.1, 0.1), seed=3) == (tr, va, te)
    assert split(data, (0.8, 0.1, 0.1), seed=4) != (tr, va, te)


def test_split_all_train_and_bad_ratios():
    data = traces(10, 2)
    tr, va, te = split(data, (1, 0, 0), seed=0)
    assert tr == data and va == [] and te == []
    with pytest.raises(ValueError):
        split(data, (0.5, 0.4), seed=0)


def test_split_warns_on_missing_class():
    with pytest.warns(UserWarning):
        split(traces(10, 1), (0.5, 0.25, 0.25), seed=0)


def test_downsample_keeps_malicious():
    data = traces(50, 7)
    out = downsample(data, SamplingPlan(10, seed=1))
    assert sum(t.label for t in out) == 7
    assert len(out) == 17
    assert downsample(data, SamplingPlan("all")) == data
    assert out == downsample(data, SamplingPlan(10, seed=1))
    with pytest.raises(ValueError):
        downsample(data, SamplingPlan(44))
    with pytest.raises(ValueError):
        SamplingPlan(0)


def test_subsample_stratified():
    data = traces(200, 40)
    sub = subsample(data, 0.1, seed=0)
    assert len(sub) == 20 and sum(t.label for t in sub) == 4
    assert subsample(data, 1.0, seed=0) == data
    with pytest.raises(ValueError):
        subsample(data, 0.0, seed=0)


# -- training --

def learnable(n=160, seed=0):
    """Malicious traces contain a SHELL_COMMAND with a long gap; benign ones do not."""
    rng = np.random.default_rng(seed)
    cfg = TraceConfig(max_length=6)
    out = []
    benign = ["FILE_READ", "FILE_OPEN", "PROCESS_CREATE"]
    for i in range(n):
        k = int(rng.integers(2, 6))
        toks = [benign[j] for j in rng.integers(0, 3, k)]
        deltas = rng.exponential(1.0, k).round(3).tolist()
        label = int(i % 4 == 0)
        if label:
            toks[-1] = "SHELL_COMMAND"
            deltas[-1] = 8.0
        evs = tuple(TraceEvent(t, d, f"x{i}e{j}") for j, (t, d) in enumerate(zip(toks, deltas)))
        out.append(finalize_trace(Trace(evs, label, f"x{i:04d}"), cfg))
    return out


SMALL = {"d_model": 16, "n_heads": 2, "d_ff": 32, "dtype": "float64"}


def test_zero_epochs_returns_initial_model():
    data = learnable(40)
    res = train("transformer", data, VOCAB, TrainConfig(epochs=0, seed=1), model_kwargs=SMALL)
    assert res.history == [] and res.steps == 0 and res.best_epoch == 0


@pytest.mark.parametrize("kind,kw", [("transformer", SMALL), ("lstm", {"embed_dim": 16, "hidden_size": 16})])
def test_training_learns_and_is_deterministic(kind, kw):
    data = learnable(400)
    tr, va, te = split(data, (0.6, 0.2, 0.2), seed=0)
    cfg = TrainConfig(epochs=8, batch_size=8, seed=5, optimizer=AdamWConfig(lr=5e-3))
    res = train(kind, tr, VOCAB, cfg, va, model_kwargs=kw)
    assert [h["split"] for h in res.history] == ["train", "val"] * 8
    best = max(h["f1"] for h in res.history if h["split"] == "val")
    assert res.best_val.f1 == best
    rep, _ = evaluate(res.model, encode_unmasked(va, VOCAB, TemporalConfig()))
    assert rep.f1 == best                      # best-F1 parameters were restored
    rep, _ = evaluate(res.model, encode_unmasked(te, VOCAB, TemporalConfig()))
    assert rep.f1 >= 0.9
    again = train(kind, tr, VOCAB, cfg, va, model_kwargs=kw)
    assert format_run_log(again.history) == format_run_log(res.history)
    log = res.run_log_csv().splitlines()
    assert log[0] == ",".join(RUN_LOG_COLUMNS) and len(log) == 17


def test_training_requires_both_classes():
    data = [t for t in learnable(40) if t.label == 0]
    with pytest.raises(ValueError):
        train("lstm", data, VOCAB, TrainConfig(epochs=1))


def test_divergence_reports_history():
    data = learnable(64)
    cfg = TrainConfig(epochs=3, batch_size=16, optimizer=AdamWConfig(lr=1e6, max_grad_norm=None),
                      lr_schedule="constant")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with np.errstate(all="ignore"):
            try:
                train("lstm", data, VOCAB, cfg, model_kwargs={"embed_dim": 8, "hidden_size": 8})
            except TrainingDiverged as e:
                assert isinstance(e.history, list)
            else:
                pytest.skip("did not diverge with this seed")


def test_sweeps_shape():
    data = learnable(200)
    tr, va, te = split(data, (0.6, 0.2, 0.2), seed=0)
    cfg = TrainConfig(epochs=1, batch_size=32, seed=0)
    kw = {"transformer": SMALL, "lstm": {"embed_dim": 8, "hidden_size": 8}}
    rows = data_size_sweep(tr, va, te, VOCAB, (0.5, 1.0), cfg, model_kwargs=kw)
    assert [(r["fraction"], r["model"]) for r in rows] == [
        (0.5, "transformer"), (0.5, "lstm"), (1.0, "transformer"), (1.0, "lstm")]
    assert rows[2]["n_train"] == len(tr)
    assert format_sweep(rows).splitlines()[0] == "fraction,model,n_train,precision,recall,f1,accuracy"
    n_mal = sum(t.label for t in tr)
    rows = imbalance_sweep(tr, va, te, VOCAB, (1, 2), cfg, kind="lstm", model_kwargs=kw["lstm"])
    assert [r["benign_count"] for r in rows] == [n_mal, 2 * n_mal]
    assert all(r["malicious_count"] == n_mal for r in rows)
    csv_lines = format_imbalance(rows).splitlines()
    assert csv_lines[0].startswith("benign_count,malicious_count") and len(csv_lines) == 3


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr_schedule="cosine")
    assert math.isclose(TrainConfig().mlm_weight, 0.5)
