"""Splitting, class-imbalance handling, training loops, metrics and sweeps."""
from __future__ import annotations

import copy
import csv
import io
import logging
import math
import warnings
from dataclasses import asdict, dataclass, replace
from typing import Sequence, Union

import numpy as np

from .embedding import Batch, TemporalConfig, Vocabulary, apply_mask, encode_unmasked
from .lstm import LstmClassifier, LstmConfig
from .optim import AdamW, AdamWConfig, linear_schedule
from .traces import MALICIOUS, Trace
from .transformer import ModelConfig, TransformerClassifier

logger = logging.getLogger(__name__)

# Peak learning rates picked on validation F1 of the desk corpus. The LSTM has
# no MLM signal and fewer parameters per step, and at lr 1e-3 it stays at the
# all-benign solution for most of a short (small-data) run.
DEFAULT_LR = {"transformer": 1e-3, "lstm": 1e-2}


def config_for(kind: str, cfg: TrainConfig, lr: dict | None = None) -> TrainConfig:
    """``cfg`` with the optimizer learning rate set from ``lr`` (falling back to DEFAULT_LR)."""
    rates = {**DEFAULT_LR, **(lr or {})}
    return replace(cfg, optimizer=replace(cfg.optimizer, lr=rates[kind]))

class TrainingDiverged(FloatingPointError):
    """Non-finite loss or gradient; ``history`` holds the epochs completed so far."""

    def __init__(self, msg: str, history: list[dict]):
        super().__init__(msg)
        self.history = history


RUN_LOG_COLUMNS = ("epoch", "split", "precision", "recall", "f1", "accuracy", "loss")


# -- metrics -------------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    counts: ConfusionCounts

    def row(self) -> dict:
        d = {k: getattr(self, k) for k in ("precision", "recall", "f1", "accuracy")}
        d.update(asdict(self.counts))
        return d


def metrics_from_counts(c: ConfusionCounts) -> MetricsReport:
    """Precision, recall, F1 and accuracy with malicious as the positive class.

    Degenerate denominators give 0: precision when nothing is flagged,
    recall when there are no positives, F1 when both are 0.
    """
    pr = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    rc = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * pr * rc / (pr + rc) if pr + rc else 0.0
    acc = (c.tp + c.tn) / c.total if c.total else 0.0
    return MetricsReport(pr, rc, f1, acc, c)


def compute_metrics(preds, labels) -> MetricsReport:
    p = np.asarray(preds).astype(int)
    y = np.asarray(labels).astype(int)
    if p.shape != y.shape:
        raise ValueError(f"predictions {p.shape} and labels {y.shape} differ in shape")
    if p.size == 0:
        raise ValueError("need at least one prediction")
    c = ConfusionCounts(
        tp=int(np.sum((p == 1) & (y == 1))),
        fp=int(np.sum((p == 1) & (y == 0))),
        fn=int(np.sum((p == 0) & (y == 1))),
        tn=int(np.sum((p == 0) & (y == 0))),
    )
    return metrics_from_counts(c)


# -- data handling ---------------------------------------------------------------

def split(traces: Sequence[Trace], ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Stratified, seeded train/validation/test split.

    Within each class the shuffled items are cut at ``round(cumsum(ratios) * n)``;
    each partition keeps the input order.
    """
    r = np.asarray(ratios, dtype=float)
    if r.ndim != 1 or np.any(r < 0) or not math.isclose(r.sum(), 1.0, abs_tol=1e-9):
        raise ValueError("ratios must be non-negative and sum to 1")
    rng = np.random.default_rng(seed)
    labels = np.array([t.label for t in traces], dtype=int)
    parts: list[list[int]] = [[] for _ in r]
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        cuts = np.round(np.cumsum(r) * idx.size).astype(int)
        cuts[-1] = idx.size
        start = 0
        for k, stop in enumerate(cuts):
            parts[k].extend(idx[start:stop].tolist())
            start = stop
    out = []
    for k, part in enumerate(parts):
        part.sort()
        sub = [traces[i] for i in part]
        present = {t.label for t in sub}
        if r[k] > 0 and sub and present != {0, 1}:
            warnings.warn(f"partition {k} lacks class(es) {sorted({0, 1} - present)}", stacklevel=2)
        out.append(sub)
    return tuple(out)


@dataclass(frozen=True)
class SamplingPlan:
    benign_target_count: Union[int, str] = "all"
    seed: int = 0

    def __post_init__(self):
        t = self.benign_target_count
        if t != "all" and not (isinstance(t, (int, np.integer)) and t > 0):
            raise ValueError("benign_target_count must be a positive integer or 'all'")


def downsample(traces: Sequence[Trace], plan: SamplingPlan) -> list[Trace]:
    """Uniformly drop benign traces down to the plan's target; malicious ones are kept."""
    if plan.benign_target_count == "all":
        return list(traces)
    benign = [i for i, t in enumerate(traces) if t.label != MALICIOUS]
    target = int(plan.benign_target_count)
    if target > len(benign):
        raise ValueError(f"benign target {target} exceeds the {len(benign)} benign traces available")
    rng = np.random.default_rng(plan.seed)
    keep = set(np.asarray(benign)[rng.choice(len(benign), size=target, replace=False)].tolist())
    return [t for i, t in enumerate(traces) if t.label == MALICIOUS or i in keep]


def subsample(traces: Sequence[Trace], fraction: float, seed: int) -> list[Trace]:
    """Stratified random fraction of a trace list (at least one trace per present class)."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    if fraction == 1:
        return list(traces)
    rng = np.random.default_rng(seed)
    labels = np.array([t.label for t in traces])
    keep = []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if idx.size:
            n = max(1, int(round(fraction * idx.size)))
            keep.extend(idx[rng.choice(idx.size, size=n, replace=False)].tolist())
    return [traces[i] for i in sorted(keep)]


# -- training ------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    optimizer: AdamWConfig = AdamWConfig()
    mlm_weight: float = 0.5
    p_mask: float = 0.15
    class_weights: tuple[float, float] = (1.0, 1.0)
    window_seconds: float = 2.0
    seed: int = 0
    lr_schedule: str = "linear"       # "linear" (warmup then decay to 0) or "constant"
    warmup_fraction: float = 0.06

    def __post_init__(self):
        if self.lr_schedule not in ("linear", "constant"):
            raise ValueError("lr_schedule must be 'linear' or 'constant'")
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError("warmup_fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: object
    history: list[dict]
    best_epoch: int
    best_val: MetricsReport | None
    steps: int = 0

    def run_log_csv(self) -> str:
        return format_run_log(self.history)


def format_run_log(history: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RUN_LOG_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in history:
        w.writerow({k: (f"{row[k]:.6f}" if isinstance(row[k], float) else row[k]) for k in RUN_LOG_COLUMNS})
    return buf.getvalue()


def build_model(kind: str, vocab: Vocabulary, seq_len: int, seed: int, temporal: bool = True,
                model_kwargs: dict | None = None):
    kw = dict(model_kwargs or {})
    if kind == "transformer":
        kw.setdefault("dtype", "float32")
        return TransformerClassifier(
            ModelConfig(vocab_size=len(vocab), max_positions=seq_len, temporal=temporal, **kw), seed=seed
        )
    if kind == "lstm":
        kw.setdefault("dtype", "float32")
        return LstmClassifier(LstmConfig(vocab_size=len(vocab), temporal=temporal, **kw), seed=seed)
    raise ValueError(f"unknown model kind {kind!r}")


def predict(model, batch: Batch, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    proba = model.predict_proba(batch)
    return (proba >= threshold).astype(int), proba


def evaluate(model, batch: Batch) -> tuple[MetricsReport, np.ndarray]:
    preds, proba = predict(model, batch)
    return compute_metrics(preds, batch.labels), proba


def _val_loss(proba: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(np.where(labels == 1, proba, 1.0 - proba), 1e-12, 1.0)
    return float(-np.log(p).mean())


def train(
    kind: str,
    train_traces: Sequence[Trace],
    vocab: Vocabulary,
    cfg: TrainConfig = TrainConfig(),
    val_traces: Sequence[Trace] = (),
    plan: SamplingPlan = SamplingPlan(),
    temporal: bool = True,
    model_kwargs: dict | None = None,
) -> TrainResult:
    """Train a transformer or LSTM classifier; keep the parameters of the best validation F1.

    Each epoch shuffles the (downsampled) training set into mini-batches.
    Transformer batches are masked afresh every time they are drawn and
    optimize the joint MLM + classification objective; the LSTM optimizes
    classification only. Without validation data the final epoch is kept.
    """
    train_traces = downsample(train_traces, plan)
    labels = {t.label for t in train_traces}
    if cfg.epochs > 0 and labels != {0, 1}:
        raise ValueError("training data must contain both benign and malicious traces")
    tcfg = TemporalConfig(cfg.window_seconds)
    data = encode_unmasked(train_traces, vocab, tcfg)
    val = encode_unmasked(val_traces, vocab, tcfg) if len(val_traces) else None

    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    init_seed = int(seeds[0].generate_state(1)[0])
    shuffle_rng, mask_rng, drop_rng = (np.random.default_rng(s) for s in seeds[1:])
    model = build_model(kind, vocab, data.seq_len, init_seed, temporal, model_kwargs)
    opt = AdamW(model, cfg.optimizer)

    history: list[dict] = []
    best_f1, best_epoch, best_val = -1.0, 0, None
    best_params = copy.deepcopy(model.params)
    n = len(data)
    steps = 0
    total_steps = cfg.epochs * math.ceil(n / cfg.batch_size)
    warmup = int(round(cfg.warmup_fraction * total_steps))
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        losses, seen_preds, seen_labels = [], [], []
        for s in range(0, n, cfg.batch_size):
            b = data.take(order[s:s + cfg.batch_size]).trimmed()
            if kind == "transformer":
                if cfg.mlm_weight > 0:
                    b = apply_mask(b, cfg.p_mask, mask_rng)
                out = model.forward(b, train=True, rng=drop_rng)
                parts = model.loss(out, b, cfg.mlm_weight, cfg.class_weights)
                proba = out.class_probs[:, 1]
            else:
                probs = model.forward(b, train=True)
                parts = model.loss(probs, b, cfg.class_weights)
                proba = probs[:, 1]
            if not math.isfinite(parts["total"]):
                raise TrainingDiverged(f"loss diverged at epoch {epoch}, step {steps}", history)
            model.backward()
            scale = linear_schedule(steps, total_steps, warmup) if cfg.lr_schedule == "linear" else 1.0
            try:
                opt.step(scale)
            except FloatingPointError as e:
                raise TrainingDiverged(f"{e} at epoch {epoch}, step {steps}", history) from None
            steps += 1
            losses.append(parts["total"])
            seen_preds.append(proba >= 0.5)
            seen_labels.append(b.labels)
        tr = compute_metrics(np.concatenate(seen_preds), np.concatenate(seen_labels))
        history.append(dict(epoch=epoch, split="train", precision=tr.precision, recall=tr.recall,
                            f1=tr.f1, accuracy=tr.accuracy, loss=float(np.mean(losses))))
        if val is not None:
            rep, proba = evaluate(model, val)
            history.append(dict(epoch=epoch, split="val", precision=rep.precision, recall=rep.recall,
                                f1=rep.f1, accuracy=rep.accuracy, loss=_val_loss(proba, val.labels)))
            if rep.f1 > best_f1:
                best_f1, best_epoch, best_val = rep.f1, epoch, rep
                best_params = copy.deepcopy(model.params)
        else:
            best_epoch = epoch
            best_params = copy.deepcopy(model.params)
        logger.info("%s epoch %d: loss %.4f val f1 %s", kind, epoch, np.mean(losses),
                    f"{history[-1]['f1']:.4f}" if val is not None else "n/a")
    model.params.update(best_params)
    model.train_steps = steps
    return TrainResult(model, history, best_epoch, best_val, steps)


# -- sweeps ----------------------------------------------------------------------

def _fmt_rows(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{r[k]:.6f}" if isinstance(r[k], float) else r[k]) for k in columns})
    return buf.getvalue()


SWEEP_COLUMNS = ("fraction", "model", "n_train", "precision", "recall", "f1", "accuracy")
IMBALANCE_COLUMNS = ("benign_count", "malicious_count", "precision", "recall", "f1", "accuracy")


def data_size_sweep(
    train_traces: Sequence[Trace],
    val_traces: Sequence[Trace],
    test_traces: Sequence[Trace],
    vocab: Vocabulary,
    fractions: Sequence[float] = (0.1, 0.25, 0.5, 1.0),
    cfg: TrainConfig = TrainConfig(),
    kinds: Sequence[str] = ("transformer", "lstm"),
    temporal: dict | None = None,
    model_kwargs: dict | None = None,
    lr: dict | None = None,
) -> list[dict]:
    """Test F1 per (training fraction, model) under identical epoch budgets.

    Each model kind trains at its own peak learning rate (``lr`` over DEFAULT_LR);
    everything else in ``cfg`` is shared.
    """
    temporal = {"transformer": True, "lstm": True, **(temporal or {})}
    test = encode_unmasked(test_traces, vocab, TemporalConfig(cfg.window_seconds))
    rows = []
    for frac in fractions:
        sub = subsample(train_traces, frac, cfg.seed)
        for kind in kinds:
            res = train(kind, sub, vocab, config_for(kind, cfg, lr), val_traces, temporal=temporal[kind],
                        model_kwargs=(model_kwargs or {}).get(kind))
            rep, _ = evaluate(res.model, test)
            rows.append(dict(fraction=float(frac), model=kind, n_train=len(sub), **rep.row()))
    return rows


def imbalance_sweep(
    train_traces: Sequence[Trace],
    val_traces: Sequence[Trace],
    test_traces: Sequence[Trace],
    vocab: Vocabulary,
    multipliers: Sequence[float] = (1, 2, 4, 8),
    cfg: TrainConfig = TrainConfig(),
    kind: str = "transformer",
    model_kwargs: dict | None = None,
) -> list[dict]:
    """Test F1 for benign training counts of ``m * (malicious count)`` per multiplier."""
    n_mal = sum(t.label == MALICIOUS for t in train_traces)
    n_ben = len(train_traces) - n_mal
    test = encode_unmasked(test_traces, vocab, TemporalConfig(cfg.window_seconds))
    rows = []
    for m in multipliers:
        target = min(n_ben, max(1, int(round(m * n_mal))))
        plan = SamplingPlan(target, seed=cfg.seed)
        sampled = downsample(train_traces, plan)
        kept_mal = sum(t.label == MALICIOUS for t in sampled)
        if kept_mal != n_mal:
            raise AssertionError("downsampling changed the malicious trace count")
        res = train(kind, sampled, vocab, cfg, val_traces, model_kwargs=model_kwargs)
        rep, _ = evaluate(res.model, test)
        rows.append(dict(benign_count=target, malicious_count=kept_mal, **rep.row()))
    return rows


def format_metrics(rep: MetricsReport) -> str:
    """One-row CSV of a report: four scores at 6 decimals, then the confusion counts."""
    return _fmt_rows([rep.row()], list(rep.row()))


def format_sweep(rows: Sequence[dict]) -> str:
    return _fmt_rows(rows, SWEEP_COLUMNS)


def format_imbalance(rows: Sequence[dict]) -> str:
    return _fmt_rows(rows, IMBALANCE_COLUMNS)
