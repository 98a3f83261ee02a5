from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class AdamWConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    max_grad_norm: float | None = 1.0

    def to_dict(self) -> dict:
        return asdict(self)


class AdamW:
    """Adam with decoupled weight decay (applied to matrices only).

    The decay shrinks a parameter by ``lr * weight_decay`` before the Adam
    update, so ``lr == 0`` leaves every parameter untouched.
    """

    def __init__(self, model, cfg: AdamWConfig = AdamWConfig()):
        self.model = model
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in model.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in model.params.items()}

    def step(self, lr_scale: float = 1.0) -> float:
        """Apply one update from ``model.grads``, then clear them. Returns the pre-clip grad norm.

        ``lr_scale`` multiplies the configured learning rate for this step only
        (this is how schedules are applied).
        """
        cfg, params, grads = self.cfg, self.model.params, self.model.grads
        lr = cfg.lr * lr_scale
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        norm = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values())))
        scale = 1.0
        if cfg.max_grad_norm is not None and norm > cfg.max_grad_norm:
            scale = cfg.max_grad_norm / (norm + 1e-12)
        self.t += 1
        b1, b2 = cfg.beta1, cfg.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, p in params.items():
            g = grads[name] * scale if scale != 1.0 else grads[name]
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            if cfg.weight_decay and p.ndim >= 2:
                p *= 1.0 - lr * cfg.weight_decay
            p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
            g_buf = grads[name]
            g_buf.fill(0.0)
        return norm


def linear_schedule(step: int, total_steps: int, warmup_steps: int) -> float:
    """Learning-rate multiplier: linear warmup to 1, then linear decay to 0 at ``total_steps``.

    ``step`` counts from 0. A zero warmup starts at full rate.
    """
    if warmup_steps > 0 and step < warmup_steps:
        return (step + 1) / warmup_steps
    remaining = total_steps - warmup_steps
    if remaining <= 0:
        return 1.0
    return max(0.0, (total_steps - step) / remaining)
