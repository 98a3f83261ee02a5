"""
Checking hand-written backward passes
=====================================

Both models compute gradients analytically. Here every parameter tensor of a
tiny double-precision transformer and LSTM is compared with central finite
differences. The error is max|analytic - numeric| over the larger magnitude.

    python3 demos/02_gradient_check.py
"""
import numpy as np

from logshield.embedding import IGNORE, MASK_ID, Batch
from logshield.lstm import LstmClassifier, LstmConfig
from logshield.transformer import ModelConfig, TransformerClassifier

V, B, L = 12, 3, 6
rng = np.random.default_rng(0)

# A random batch with ragged lengths, a few masked positions and labels.
ids = rng.integers(4, V, (B, L))
mask = np.arange(L)[None, :] < np.array([[6], [4], [5]])
ids[~mask] = 0
targets = np.full((B, L), IGNORE)
for r, c in [(0, 2), (1, 1), (2, 3)]:
    targets[r, c], ids[r, c] = ids[r, c], MASK_ID
batch = Batch(ids, np.where(mask, rng.random((B, L)), 0.0), mask, targets, np.array([0, 1, 1]))


def finite_difference(f, p, eps=1e-4):
    g = np.zeros_like(p)
    for i in np.ndindex(p.shape):
        old = p[i]
        p[i] = old + eps
        up = f()
        p[i] = old - eps
        g[i] = (up - f()) / (2 * eps)
        p[i] = old
    return g


def check(name, model, loss):
    model.zero_grad()
    loss()
    model.backward()
    print(f"\n{name}")
    for k, p in model.params.items():
        a = model.grads[k].copy()
        n = finite_difference(loss, p)
        err = np.abs(a - n).max() / max(np.abs(a).max(), np.abs(n).max(), 1e-6)
        print(f"  {k:14s} {str(p.shape):10s} rel. error {err:.1e}")


tf = TransformerClassifier(ModelConfig(vocab_size=V, max_positions=L, d_model=8, n_heads=2,
                                       n_layers=2, d_ff=16, dropout_rate=0.0), seed=1)
lstm = LstmClassifier(LstmConfig(vocab_size=V, embed_dim=6, hidden_size=5, bidirectional=True), seed=1)
for m in (tf, lstm):   # move off the small init so every path matters
    for p in m.params.values():
        p += rng.normal(0, 0.3, p.shape)

check("transformer, joint MLM + classification loss",
      tf, lambda: tf.loss(tf.forward(batch), batch, 0.5, (1.0, 3.0))["total"])
check("bidirectional LSTM, weighted classification loss",
      lstm, lambda: lstm.loss(lstm.forward(batch), batch, (1.0, 3.0))["total"])
