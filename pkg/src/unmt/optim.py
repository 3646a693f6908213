"""Adam and RMSProp updates applied in place to autodiff parameters."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError


@dataclass
class OptimizerState:
    kind: str
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay: float = 0.99  # RMSProp smoothing of the squared-gradient average
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def adam(cls, params, lr=3e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        return cls("adam", lr, beta1, beta2, eps, m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params])

    @classmethod
    def rmsprop(cls, params, lr=5e-4, decay=0.99, eps=1e-8):
        return cls("rmsprop", lr, eps=eps, decay=decay, v=[np.zeros_like(p.data) for p in params])

    def buffers(self):
        """Named moment buffers, for checkpointing."""
        out = {f"v/{i}": b for i, b in enumerate(self.v)}
        out.update({f"m/{i}": b for i, b in enumerate(self.m)})
        return out


def _check(params, grads, state, kind):
    if state.kind != kind:
        raise ContractError(f"{kind}_step called with a {state.kind} state")
    if len(params) != len(grads) or len(params) != len(state.v):
        raise DimensionError(f"{kind}_step", (len(params),), (len(grads),), (len(state.v),))
    for p, g, v in zip(params, grads, state.v):
        if g is not None and (g.shape != p.data.shape or v.shape != p.data.shape):
            raise DimensionError(f"{kind}_step", p.data.shape, g.shape, v.shape)


def adam_step(params, grads, state):
    """Bias-corrected Adam.  A ``None`` gradient counts as zero."""
    _check(params, grads, state, "adam")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p.data -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.data.dtype)
    return params


def rmsprop_step(params, grads, state):
    _check(params, grads, state, "rmsprop")
    state.step += 1
    a = state.decay
    for p, g, v in zip(params, grads, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        v *= a
        v += (1 - a) * g * g
        p.data -= (state.lr * g / (np.sqrt(v) + state.eps)).astype(p.data.dtype)
    return params


def clip_grad_norm(grads, max_norm):
    """Return ``(clipped_grads, norm)`` with global L2 norm at most ``max_norm``.

    Gradient arrays may alias each other after backprop, so this never
    scales in place.
    """
    total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads if g is not None)))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-6)
        grads = [None if g is None else (g * scale).astype(g.dtype) for g in grads]
    return grads, total
