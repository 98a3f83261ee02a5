"""LSTM baseline classifier over the same encoded traces as the transformer."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .embedding import Batch, embed, embed_backward, init_embedding
from .transformer import ContractError, classification_loss


@dataclass(frozen=True)
class LstmConfig:
    vocab_size: int
    embed_dim: int = 64
    hidden_size: int = 64
    layers: int = 1
    bidirectional: bool = False
    temporal: bool = True
    dtype: str = "float64"

    def __post_init__(self):
        if min(self.vocab_size, self.embed_dim, self.hidden_size, self.layers) <= 0:
            raise ValueError("LSTM dimensions must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def lstm_direction(x, mask, Wx, Wh, b, reverse=False):
    """Run one LSTM direction; pad steps carry the previous state through unchanged.

    Returns per-step outputs (B, T, H), the final hidden state and a cache.
    Gate order in the packed weights is input, forget, cell, output.
    """
    B, T, _ = x.shape
    H = Wh.shape[0]
    h = np.zeros((B, H), x.dtype)
    c = np.zeros((B, H), x.dtype)
    outs = np.zeros((B, T, H), x.dtype)
    xz = x @ Wx + b
    steps = range(T - 1, -1, -1) if reverse else range(T)
    cache = []
    for t in steps:
        z = xz[:, t] + h @ Wh
        i = nn.sigmoid(z[:, :H])
        f = nn.sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = nn.sigmoid(z[:, 3 * H:])
        cn = f * c + i * g
        tc = np.tanh(cn)
        hn = o * tc
        m = mask[:, t, None].astype(x.dtype)
        cache.append((t, h, c, i, f, g, o, tc, m))
        h = m * hn + (1 - m) * h
        c = m * cn + (1 - m) * c
        outs[:, t] = h
    return outs, h, cache


def lstm_direction_backward(douts, dh_final, x, Wx, Wh, cache):
    B, T, _ = x.shape
    H = Wh.shape[0]
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(4 * H, x.dtype)
    dx = np.zeros_like(x)
    dh = dh_final.copy()
    dc = np.zeros_like(dh)
    dz_all = np.zeros((B, T, 4 * H), x.dtype)
    for t, h_prev, c_prev, i, f, g, o, tc, m in reversed(cache):
        dh = dh + douts[:, t]
        dhn = m * dh
        dcn = m * dc + dhn * o * (1 - tc * tc)
        do = dhn * tc
        di = dcn * g
        dg = dcn * i
        df = dcn * c_prev
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1
        )
        dz_all[:, t] = dz
        dWh += h_prev.T @ dz
        dh = (1 - m) * dh + dz @ Wh.T
        dc = (1 - m) * dc + dcn * f
    d = x.shape[-1]
    dWx += x.reshape(-1, d).T @ dz_all.reshape(-1, 4 * H)
    db += dz_all.reshape(-1, 4 * H).sum(axis=0)
    dx = dz_all @ Wx.T
    return dx, dWx, dWh, db


class LstmClassifier:
    kind = "lstm"

    def __init__(self, cfg: LstmConfig, seed: int = 0):
        self.cfg = cfg
        self.dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(seed)
        dt, H = self.dtype, cfg.hidden_size
        p = init_embedding(cfg.vocab_size, cfg.embed_dim, rng, temporal=cfg.temporal, dtype=dt)
        n_dir = 2 if cfg.bidirectional else 1
        in_dim = cfg.embed_dim
        bound = 1.0 / np.sqrt(H)
        for l in range(cfg.layers):
            for dname in ("f", "r")[:n_dir]:
                pre = f"lstm{l}{dname}"
                p[f"{pre}.Wx"] = rng.uniform(-bound, bound, (in_dim, 4 * H)).astype(dt)
                p[f"{pre}.Wh"] = rng.uniform(-bound, bound, (H, 4 * H)).astype(dt)
                bias = np.zeros(4 * H, dt)
                bias[H:2 * H] = 1.0  # forget gate starts open
                p[f"{pre}.b"] = bias
            in_dim = H * n_dir
        p["cls.W"] = nn.trunc_normal(rng, (2, H * n_dir), 0.02, dt)
        p["cls.b"] = np.zeros(2, dt)
        self.params = p
        self.grads = {k: np.zeros_like(v) for k, v in p.items()}
        self._cache = None
        self._seed_grad = None

    def forward(self, batch: Batch, train: bool = False, rng=None) -> np.ndarray:
        """Class probabilities (B, 2) from the final state over non-pad positions."""
        p, cfg = self.params, self.cfg
        mask = batch.attention_mask
        if not mask.any(axis=1).all():
            raise ValueError("every sequence needs at least one non-pad position")
        x = embed(batch.token_ids, batch.slot_values, p)
        n_dir = 2 if cfg.bidirectional else 1
        layer_caches = []
        finals = None
        for l in range(cfg.layers):
            outs, finals, dcaches = [], [], []
            for k, dname in enumerate(("f", "r")[:n_dir]):
                pre = f"lstm{l}{dname}"
                o, hf, ch = lstm_direction(x, mask, p[f"{pre}.Wx"], p[f"{pre}.Wh"], p[f"{pre}.b"], reverse=k == 1)
                outs.append(o)
                finals.append(hf)
                dcaches.append(ch)
            layer_caches.append((x, dcaches))
            x = np.concatenate(outs, axis=-1) if n_dir > 1 else outs[0]
            if not np.all(np.isfinite(x)):
                raise FloatingPointError(f"non-finite activations in LSTM layer {l}")
        pooled = np.concatenate(finals, axis=-1) if n_dir > 1 else finals[0]
        logits = pooled @ p["cls.W"].T + p["cls.b"]
        probs = nn.softmax(logits)
        self._cache = dict(batch=batch, layers=layer_caches, pooled=pooled, probs=probs)
        self._seed_grad = None
        return probs

    def loss(self, probs: np.ndarray, batch: Batch, class_weights=(1.0, 1.0)) -> dict[str, float]:
        if self._cache is None:
            raise ContractError("loss() called before forward()")
        y = batch.labels
        val = classification_loss(probs, y, class_weights)
        w = np.asarray(class_weights, dtype=self.dtype)[y]
        onehot = np.zeros_like(probs)
        onehot[np.arange(len(y)), y] = 1.0
        self._seed_grad = ((w / w.sum())[:, None] * (probs - onehot)).astype(self.dtype)
        return {"total": val, "cls": val, "mlm": 0.0}

    def backward(self) -> dict[str, np.ndarray]:
        if self._cache is None or self._seed_grad is None:
            raise ContractError("backward() needs forward() and loss() first")
        c, p, gr, cfg = self._cache, self.params, self.grads, self.cfg
        dlogits = self._seed_grad
        gr["cls.W"] += dlogits.T @ c["pooled"]
        gr["cls.b"] += dlogits.sum(axis=0)
        dpooled = dlogits @ p["cls.W"]
        H = cfg.hidden_size
        n_dir = 2 if cfg.bidirectional else 1
        dfinals = [dpooled[:, k * H:(k + 1) * H] for k in range(n_dir)]
        douts_next = None
        for l in reversed(range(cfg.layers)):
            x, dcaches = c["layers"][l]
            B, T, _ = x.shape
            dx = np.zeros_like(x)
            for k, dname in enumerate(("f", "r")[:n_dir]):
                pre = f"lstm{l}{dname}"
                if douts_next is None:
                    douts = np.zeros((B, T, H), self.dtype)
                    dfin = dfinals[k]
                else:
                    douts = douts_next[..., k * H:(k + 1) * H]
                    dfin = np.zeros((B, H), self.dtype)
                ddx, dWx, dWh, db = lstm_direction_backward(douts, dfin, x, p[f"{pre}.Wx"], p[f"{pre}.Wh"], dcaches[k])
                gr[f"{pre}.Wx"] += dWx
                gr[f"{pre}.Wh"] += dWh
                gr[f"{pre}.b"] += db
                dx += ddx
            douts_next = dx
        batch = c["batch"]
        embed_backward(douts_next, batch.token_ids, batch.slot_values, p, gr)
        self._cache = None
        self._seed_grad = None
        return gr

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def predict_proba(self, batch: Batch, batch_size: int = 512) -> np.ndarray:
        out = [self.forward(batch.take(slice(s, s + batch_size)).trimmed())[:, 1] for s in range(0, len(batch), batch_size)]
        self._cache = None
        return np.concatenate(out) if out else np.zeros(0)


def cross_classification_report(pred_a, pred_b, labels) -> dict[str, int]:
    """Counts of traces one model gets right while the other gets them wrong."""
    a, b, y = (np.asarray(v).astype(int) for v in (pred_a, pred_b, labels))
    if not (a.shape == b.shape == y.shape):
        raise ValueError(f"prediction/label lengths differ: {a.shape}, {b.shape}, {y.shape}")
    ca, cb = a == y, b == y
    return {
        "a_correct_b_wrong": int(np.sum(ca & ~cb)),
        "b_correct_a_wrong": int(np.sum(cb & ~ca)),
        "a_wrong": int(np.sum(~ca)),
        "b_wrong": int(np.sum(~cb)),
        "total": int(y.size),
    }


def write_cross_report(path, report: dict[str, int], name_a: str = "logshield", name_b: str = "lstm") -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("comparison,count,out_of\n")
        f.write(f"correct_{name_a}_misclassified_{name_b},{report['a_correct_b_wrong']},{report['b_wrong']}\n")
        f.write(f"correct_{name_b}_misclassified_{name_a},{report['b_correct_a_wrong']},{report['a_wrong']}\n")
        f.write(f"total,{report['total']},{report['total']}\n")
