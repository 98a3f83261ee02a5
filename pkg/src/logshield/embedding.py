"""Vocabulary, temporal slots, masked encoding and the input embedding layer."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .events import DatasetSchema
from .traces import PAD, Trace

DTC, END, MASK = "[DTC]", "[END]", "[MASK]"
SPECIAL_TOKENS = (PAD, DTC, END, MASK)
PAD_ID, DTC_ID, END_ID, MASK_ID = 0, 1, 2, 3
IGNORE = -1


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.tokens[:4] != SPECIAL_TOKENS:
            raise ValueError(f"vocabulary must start with {SPECIAL_TOKENS}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary has duplicate tokens")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def from_schema(cls, schema: DatasetSchema) -> "Vocabulary":
        return cls(SPECIAL_TOKENS + tuple(schema.pairs))

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise EncodingError(f"token {token!r} not in vocabulary") from None

    def to_json(self) -> str:
        return json.dumps(list(self.tokens))

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        return cls(tuple(json.loads(text)))

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


@dataclass(frozen=True)
class TemporalConfig:
    window_seconds: float = 2.0

    def __post_init__(self):
        if not (math.isfinite(self.window_seconds) and self.window_seconds > 0):
            raise ValueError("window_seconds must be finite and positive")


def assign_slots(deltas: Sequence[float], window: float) -> np.ndarray:
    """Normalized time-slot value for each event of one trace.

    Event times are cumulative sums of the parent deltas (the trace root sits
    at its own delta, 0 for a true root). Each time falls into window slot
    ``floor(t / w) + 1``; values are divided by the slot of the last event so
    they lie in (0, 1] and end at exactly 1.

    >>> assign_slots([1.0, 0.5, 1.0, 2.5], 2.0).tolist() == [1/3, 1/3, 2/3, 1.0]
    True
    """
    d = np.asarray(deltas, dtype=np.float64)
    if d.ndim != 1 or d.size == 0:
        raise ValueError("need a non-empty 1-d sequence of deltas")
    if not np.all(np.isfinite(d)):
        raise ValueError("deltas must be finite")
    if np.any(d < 0):
        raise ValueError("deltas must be >= 0")
    if not (math.isfinite(window) and window > 0):
        raise ValueError("window must be finite and positive")
    slots = np.floor(np.cumsum(d) / window) + 1.0
    n = slots[-1]
    return np.minimum(slots, n) / n


@dataclass
class Batch:
    """Row-stacked encoded sequences, ``[DTC] content [END] [PAD]...``."""

    token_ids: np.ndarray       # (B, L) int
    slot_values: np.ndarray     # (B, L) float, 0 at specials and pads
    attention_mask: np.ndarray  # (B, L) bool, False at pads
    mlm_targets: np.ndarray     # (B, L) int, IGNORE where not masked
    labels: np.ndarray          # (B,) int

    def __len__(self) -> int:
        return self.token_ids.shape[0]

    @property
    def seq_len(self) -> int:
        return self.token_ids.shape[1]

    def take(self, idx) -> "Batch":
        return Batch(
            self.token_ids[idx], self.slot_values[idx], self.attention_mask[idx],
            self.mlm_targets[idx], self.labels[idx],
        )

    def trimmed(self) -> "Batch":
        """Drop trailing columns that are padding in every row."""
        n = int(np.flatnonzero(self.attention_mask.any(axis=0)).max()) + 1 if len(self) else 0
        if n == self.seq_len:
            return self
        return Batch(self.token_ids[:, :n], self.slot_values[:, :n], self.attention_mask[:, :n],
                     self.mlm_targets[:, :n], self.labels)

    @property
    def eligible(self) -> np.ndarray:
        """Content positions: not a special token, not padding."""
        return self.attention_mask & (self.token_ids > MASK_ID)

    def to_records(self) -> list[dict]:
        return [
            {
                "token_ids": self.token_ids[i].tolist(),
                "slot_values": self.slot_values[i].tolist(),
                "mlm_targets": self.mlm_targets[i].tolist(),
                "label": int(self.labels[i]),
            }
            for i in range(len(self))
        ]


# A single encoded trace is a batch of one row.
EmbeddedSequence = Batch


def encode_unmasked(
    traces: Sequence[Trace], vocab: Vocabulary, tcfg: TemporalConfig
) -> Batch:
    """Encode finalized traces without masking; all must share one length."""
    if not traces:
        raise EncodingError("no traces to encode")
    lengths = {len(t.events) for t in traces}
    if len(lengths) != 1:
        raise EncodingError(f"traces must be finalized to one length, got {sorted(lengths)}")
    L = lengths.pop() + 2
    B = len(traces)
    ids = np.zeros((B, L), dtype=np.int64)
    slots = np.zeros((B, L), dtype=np.float64)
    mask = np.zeros((B, L), dtype=bool)
    labels = np.zeros(B, dtype=np.int64)
    for r, t in enumerate(traces):
        content = t.content
        n = len(content)
        if n == 0:
            raise EncodingError(f"trace {t.origin_event!r} has no content events")
        ids[r, 0] = DTC_ID
        ids[r, 1:n + 1] = [vocab.id(e.token) for e in content]
        ids[r, n + 1] = END_ID
        slots[r, 1:n + 1] = assign_slots([e.time_delta for e in content], tcfg.window_seconds)
        mask[r, : n + 2] = True
        labels[r] = t.label
    return Batch(ids, slots, mask, np.full((B, L), IGNORE, dtype=np.int64), labels)


def apply_mask(batch: Batch, p_mask: float, rng: np.random.Generator) -> Batch:
    """Dynamic masking: a fresh draw over content positions on every call.

    Each eligible position becomes ``[MASK]`` with probability ``p_mask``.
    Rows that have eligible positions but drew none are redrawn, so every
    such row carries at least one masked position when ``p_mask > 0``.
    """
    if not 0.0 <= p_mask <= 1.0:
        raise ValueError("p_mask must lie in [0, 1]")
    eligible = batch.eligible
    masked = (rng.random(eligible.shape) < p_mask) & eligible
    if p_mask > 0:
        todo = np.flatnonzero(eligible.any(axis=1) & ~masked.any(axis=1))
        while todo.size:
            redraw = (rng.random((todo.size, eligible.shape[1])) < p_mask) & eligible[todo]
            masked[todo] = redraw
            todo = todo[~redraw.any(axis=1)]
    ids = batch.token_ids.copy()
    targets = np.full_like(ids, IGNORE)
    targets[masked] = ids[masked]
    ids[masked] = MASK_ID
    return Batch(ids, batch.slot_values, batch.attention_mask, targets, batch.labels)


def encode(
    t: Trace,
    vocab: Vocabulary,
    tcfg: TemporalConfig,
    rng: np.random.Generator | None = None,
    p_mask: float = 0.15,
) -> Batch:
    seq = encode_unmasked([t], vocab, tcfg)
    if rng is None or p_mask == 0:
        return seq
    return apply_mask(seq, p_mask, rng)


# -- embedding layer --------------------------------------------------------

def init_embedding(vocab_size: int, d: int, rng: np.random.Generator, temporal: bool = True,
                   dtype=np.float64, std: float = 0.02) -> dict[str, np.ndarray]:
    from .nn import trunc_normal

    params = {"emb.token": trunc_normal(rng, (vocab_size, d), std, dtype)}
    if temporal:
        params["emb.slot_w"] = trunc_normal(rng, (d,), std, dtype)
        params["emb.slot_b"] = np.zeros(d, dtype=dtype)
    return params


def slot_projection(slot_values: np.ndarray, params: dict[str, np.ndarray]) -> np.ndarray:
    return slot_values[..., None] * params["emb.slot_w"] + params["emb.slot_b"]


def embed(token_ids: np.ndarray, slot_values: np.ndarray, params: dict[str, np.ndarray]) -> np.ndarray:
    """Token lookup plus the learned projection of each position's slot value."""
    out = params["emb.token"][token_ids]
    if "emb.slot_w" in params:
        out = out + slot_projection(slot_values.astype(out.dtype), params)
    return out


def embed_backward(dout: np.ndarray, token_ids: np.ndarray, slot_values: np.ndarray,
                   params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    d = dout.shape[-1]
    flat = token_ids.reshape(-1)
    onehot = np.zeros((flat.size, grads["emb.token"].shape[0]), dout.dtype)
    onehot[np.arange(flat.size), flat] = 1.0
    grads["emb.token"] += onehot.T @ dout.reshape(-1, d)
    if "emb.slot_w" in params:
        s = slot_values.astype(dout.dtype)
        grads["emb.slot_w"] += np.einsum("bl,bld->d", s, dout)
        grads["emb.slot_b"] += dout.sum(axis=(0, 1))
