"""Post-norm transformer encoder with exact backward passes.

The model reads ``[DTC] log keys [END] [PAD]...`` sequences, adds token,
position and (optionally) temporal-slot embeddings, and runs ``n_layers``
blocks of multi-head self-attention and a GELU feed-forward, each followed
by a residual connection and layer normalization. Two heads sit on the
final hidden states: a masked-log-key head over the vocabulary and a
benign/malicious head on the ``[DTC]`` position.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .embedding import Batch, IGNORE, embed, embed_backward, init_embedding


class ContractError(RuntimeError):
    """A call sequence or input that the model contract forbids."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    max_positions: int
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    dropout_rate: float = 0.1
    temporal: bool = True
    dtype: str = "float64"

    def __post_init__(self):
        dims = (self.vocab_size, self.max_positions, self.d_model, self.n_heads, self.n_layers, self.d_ff)
        if min(dims) <= 0:
            raise ValueError("all model dimensions must be positive")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MlmPrediction:
    """Vocabulary distributions at the masked positions of a batch."""

    probs: np.ndarray       # (M, V)
    seq_index: np.ndarray   # (M,) row of the batch each prediction belongs to
    position: np.ndarray    # (M,)
    targets: np.ndarray     # (M,) true token ids
    n_sequences: int


@dataclass
class ForwardOutput:
    hidden: np.ndarray                  # (B, L, d)
    attention: list[np.ndarray]         # per layer, (B, heads, L, L)
    mlm: MlmPrediction
    class_probs: np.ndarray             # (B, 2)
    mlm_logits: np.ndarray = field(repr=False, default=None)
    class_logits: np.ndarray = field(repr=False, default=None)


def mlm_loss(pred: MlmPrediction, targets: np.ndarray | None = None) -> float:
    """Cross entropy summed over masked keys and averaged over sequences (nats)."""
    t = pred.targets if targets is None else np.asarray(targets)
    if t.size == 0:
        raise ContractError("MLM loss needs at least one masked position")
    p = pred.probs[np.arange(t.size), t]
    with np.errstate(divide="ignore"):
        return float(-np.log(p).sum() / pred.n_sequences)


def classification_loss(probs: np.ndarray, labels: np.ndarray, class_weights=(1.0, 1.0)) -> float:
    """Weighted negative log-likelihood; the weighted mean ``sum(w*nll) / sum(w)``."""
    labels = np.asarray(labels)
    w = np.asarray(class_weights, dtype=np.float64)[labels]
    p = probs[np.arange(labels.size), labels]
    with np.errstate(divide="ignore"):
        return float((w * -np.log(p)).sum() / w.sum())


def _check_finite(x: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite activations in {where}")


class TransformerClassifier:
    kind = "transformer"

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(seed)
        d, f, V, dt = cfg.d_model, cfg.d_ff, cfg.vocab_size, self.dtype
        tn = lambda shape: nn.trunc_normal(rng, shape, 0.02, dt)  # noqa: E731
        p = init_embedding(V, d, rng, temporal=cfg.temporal, dtype=dt)
        p["emb.pos"] = tn((cfg.max_positions, d))
        for l in range(cfg.n_layers):
            for name in ("q", "k", "v", "o"):
                p[f"l{l}.W{name}"] = tn((d, d))
                p[f"l{l}.b{name}"] = np.zeros(d, dt)
            p[f"l{l}.ln1.g"] = np.ones(d, dt)
            p[f"l{l}.ln1.b"] = np.zeros(d, dt)
            p[f"l{l}.W1"] = tn((d, f))
            p[f"l{l}.b1"] = np.zeros(f, dt)
            p[f"l{l}.W2"] = tn((f, d))
            p[f"l{l}.b2"] = np.zeros(d, dt)
            p[f"l{l}.ln2.g"] = np.ones(d, dt)
            p[f"l{l}.ln2.b"] = np.zeros(d, dt)
        p["mlm.W"] = tn((V, d))
        p["mlm.b"] = np.zeros(V, dt)
        p["cls.W"] = tn((2, d))
        p["cls.b"] = np.zeros(2, dt)
        self.params: dict[str, np.ndarray] = p
        self.grads = {k: np.zeros_like(v) for k, v in p.items()}
        self._cache = None
        self._seed_grads = None

    # -- forward ------------------------------------------------------------

    def _attention(self, l: int, x: np.ndarray, key_bias: np.ndarray):
        p, h = self.params, self.cfg.n_heads
        B, L, d = x.shape
        dh = d // h
        split = lambda t: t.reshape(B, L, h, dh).transpose(0, 2, 1, 3)  # noqa: E731
        q = split(x @ p[f"l{l}.Wq"] + p[f"l{l}.bq"])
        k = split(x @ p[f"l{l}.Wk"] + p[f"l{l}.bk"])
        v = split(x @ p[f"l{l}.Wv"] + p[f"l{l}.bv"])
        scale = 1.0 / float(np.sqrt(dh))
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale + key_bias
        probs = nn.softmax(scores, axis=-1)
        ctx = (probs @ v).transpose(0, 2, 1, 3).reshape(B, L, d)
        out = ctx @ p[f"l{l}.Wo"] + p[f"l{l}.bo"]
        return out, (x, q, k, v, probs, ctx)

    def forward(self, batch: Batch, train: bool = False, rng: np.random.Generator | None = None) -> ForwardOutput:
        cfg, p = self.cfg, self.params
        ids, mask = batch.token_ids, batch.attention_mask
        if ids.ndim != 2 or ids.shape != mask.shape or ids.shape != batch.slot_values.shape:
            raise ValueError(f"inconsistent batch shapes {ids.shape}, {mask.shape}, {batch.slot_values.shape}")
        B, L = ids.shape
        if L > cfg.max_positions:
            raise ValueError(f"sequence length {L} exceeds max_positions {cfg.max_positions}")
        if not mask.any(axis=1).all():
            raise ValueError("every sequence needs at least one non-pad position")
        if ids.min() < 0 or ids.max() >= cfg.vocab_size:
            raise ValueError("token id out of vocabulary range")
        drop_rng = rng if train else None
        rate = cfg.dropout_rate

        x = embed(ids, batch.slot_values, p) + p["emb.pos"][:L]
        key_bias = np.where(mask, 0.0, -np.inf).astype(self.dtype)[:, None, None, :]
        layers, attn_maps = [], []
        for l in range(cfg.n_layers):
            a, att_cache = self._attention(l, x, key_bias)
            m1 = nn.dropout_mask(drop_rng, a.shape, rate, self.dtype)
            if m1 is not None:
                a = a * m1
            y1, ln1 = nn.layer_norm(x + a, p[f"l{l}.ln1.g"], p[f"l{l}.ln1.b"])
            h1 = y1 @ p[f"l{l}.W1"] + p[f"l{l}.b1"]
            g, gt = nn.gelu(h1)
            ff = g @ p[f"l{l}.W2"] + p[f"l{l}.b2"]
            m2 = nn.dropout_mask(drop_rng, ff.shape, rate, self.dtype)
            if m2 is not None:
                ff = ff * m2
            y2, ln2 = nn.layer_norm(y1 + ff, p[f"l{l}.ln2.g"], p[f"l{l}.ln2.b"])
            _check_finite(y2, f"encoder layer {l}")
            layers.append((att_cache, m1, ln1, y1, h1, g, gt, m2, ln2))
            attn_maps.append(att_cache[4])
            x = y2
        hidden = x

        rows, cols = np.nonzero(batch.mlm_targets != IGNORE)
        hm = hidden[rows, cols]
        mlm_logits = hm @ p["mlm.W"].T + p["mlm.b"]
        cls_logits = hidden[:, 0] @ p["cls.W"].T + p["cls.b"]
        mlm = MlmPrediction(
            probs=nn.softmax(mlm_logits),
            seq_index=rows,
            position=cols,
            targets=batch.mlm_targets[rows, cols],
            n_sequences=B,
        )
        self._cache = dict(batch=batch, layers=layers, hidden=hidden, rows=rows, cols=cols,
                           hm=hm, train=train)
        self._seed_grads = None
        return ForwardOutput(hidden, attn_maps, mlm, nn.softmax(cls_logits), mlm_logits, cls_logits)

    # -- loss ---------------------------------------------------------------

    def loss(self, out: ForwardOutput, batch: Batch, mlm_weight: float = 0.5,
             class_weights=(1.0, 1.0)) -> dict[str, float]:
        """Joint objective ``mlm_weight * MLM + (1 - mlm_weight) * classification``.

        Also stores the gradient of the total with respect to both heads'
        logits, which :meth:`backward` consumes.
        """
        if self._cache is None:
            raise ContractError("loss() called before forward()")
        lam = float(mlm_weight)
        B = len(batch)
        parts = {"mlm": 0.0, "cls": 0.0}
        d_mlm = np.zeros_like(out.mlm_logits)
        if lam > 0:
            pred = out.mlm
            parts["mlm"] = mlm_loss(pred)
            onehot = np.zeros_like(pred.probs)
            onehot[np.arange(pred.targets.size), pred.targets] = 1.0
            d_mlm = lam * (pred.probs - onehot) / B
        d_cls = np.zeros_like(out.class_logits)
        if lam < 1:
            y = batch.labels
            parts["cls"] = classification_loss(out.class_probs, y, class_weights)
            w = np.asarray(class_weights, dtype=self.dtype)[y]
            onehot = np.zeros_like(out.class_probs)
            onehot[np.arange(B), y] = 1.0
            d_cls = (1.0 - lam) * (w / w.sum())[:, None] * (out.class_probs - onehot)
        parts["total"] = lam * parts["mlm"] + (1.0 - lam) * parts["cls"]
        self._seed_grads = (d_mlm.astype(self.dtype), d_cls.astype(self.dtype))
        return parts

    # -- backward -----------------------------------------------------------

    def _attention_backward(self, l: int, dout: np.ndarray, cache) -> np.ndarray:
        p, gr, h = self.params, self.grads, self.cfg.n_heads
        x, q, k, v, probs, ctx = cache
        B, L, d = x.shape
        dh = d // h
        x2 = x.reshape(-1, d)
        dout2 = dout.reshape(-1, d)
        gr[f"l{l}.Wo"] += ctx.reshape(-1, d).T @ dout2
        gr[f"l{l}.bo"] += dout2.sum(axis=0)
        dctx = (dout @ p[f"l{l}.Wo"].T).reshape(B, L, h, dh).transpose(0, 2, 1, 3)
        dprobs = dctx @ v.transpose(0, 1, 3, 2)
        dv = probs.transpose(0, 1, 3, 2) @ dctx
        dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
        dscores *= 1.0 / float(np.sqrt(dh))
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q
        merge = lambda t: t.transpose(0, 2, 1, 3).reshape(-1, d)  # noqa: E731
        dx = np.zeros_like(x2)
        for name, dt in (("q", dq), ("k", dk), ("v", dv)):
            dt = merge(dt)
            gr[f"l{l}.W{name}"] += x2.T @ dt
            gr[f"l{l}.b{name}"] += dt.sum(axis=0)
            dx += dt @ p[f"l{l}.W{name}"].T
        return dx.reshape(B, L, d)

    def backward(self) -> dict[str, np.ndarray]:
        """Accumulate exact gradients of the last :meth:`loss` into ``self.grads``."""
        if self._cache is None or self._seed_grads is None:
            raise ContractError("backward() needs forward() and loss() first")
        c, p, gr = self._cache, self.params, self.grads
        d_mlm, d_cls = self._seed_grads
        batch, hidden = c["batch"], c["hidden"]
        B, L, d = hidden.shape

        gr["mlm.W"] += d_mlm.T @ c["hm"]
        gr["mlm.b"] += d_mlm.sum(axis=0)
        gr["cls.W"] += d_cls.T @ hidden[:, 0]
        gr["cls.b"] += d_cls.sum(axis=0)
        dx = np.zeros_like(hidden)
        # (row, col) pairs are unique, so plain fancy assignment is safe
        dx[c["rows"], c["cols"]] += d_mlm @ p["mlm.W"]
        dx[:, 0] += d_cls @ p["cls.W"]

        for l in reversed(range(self.cfg.n_layers)):
            att_cache, m1, ln1, y1, h1, g, gt, m2, ln2 = c["layers"][l]
            dres2, dg2, db2 = nn.layer_norm_backward(dx, p[f"l{l}.ln2.g"], ln2)
            gr[f"l{l}.ln2.g"] += dg2
            gr[f"l{l}.ln2.b"] += db2
            dff = dres2 if m2 is None else dres2 * m2
            f = self.cfg.d_ff
            gr[f"l{l}.W2"] += g.reshape(-1, f).T @ dff.reshape(-1, d)
            gr[f"l{l}.b2"] += dff.reshape(-1, d).sum(axis=0)
            dh1 = nn.gelu_backward(dff @ p[f"l{l}.W2"].T, h1, gt)
            gr[f"l{l}.W1"] += y1.reshape(-1, d).T @ dh1.reshape(-1, f)
            gr[f"l{l}.b1"] += dh1.reshape(-1, f).sum(axis=0)
            dy1 = dres2 + dh1 @ p[f"l{l}.W1"].T
            dres1, dg1, db1 = nn.layer_norm_backward(dy1, p[f"l{l}.ln1.g"], ln1)
            gr[f"l{l}.ln1.g"] += dg1
            gr[f"l{l}.ln1.b"] += db1
            da = dres1 if m1 is None else dres1 * m1
            dx = dres1 + self._attention_backward(l, da, att_cache)

        gr["emb.pos"][:L] += dx.sum(axis=0)
        embed_backward(dx, batch.token_ids, batch.slot_values, p, gr)
        self._embedding_grad = dx
        self._cache = None
        self._seed_grads = None
        return gr

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    # -- inference ----------------------------------------------------------

    def predict_proba(self, batch: Batch, batch_size: int = 256) -> np.ndarray:
        out = []
        for s in range(0, len(batch), batch_size):
            sub = batch.take(slice(s, s + batch_size)).trimmed()
            sub.mlm_targets = np.full_like(sub.token_ids, IGNORE)
            out.append(self.forward(sub, train=False).class_probs[:, 1])
        self._cache = None
        return np.concatenate(out) if out else np.zeros(0)
