"""Position-wise language discriminator and the two adversarial losses.

The discriminator scores every encoder state ``z_j`` independently and
outputs ``p_D(tgt | z_j)``.  A sentence's log-probability of a language is
the mean over its real positions of the per-position log-probabilities,
which keeps the factorised product form up to a per-sentence scale.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .corpus import check_lang

LANG_LABEL = {"src": 0.0, "tgt": 1.0}


@dataclass(frozen=True)
class DiscConfig:
    hidden: int = 128
    layers: int = 3
    smoothing: float = 0.1
    slope: float = 0.2
    smooth_adv: bool = True


class Discriminator:
    def __init__(self, in_dim, cfg, rng):
        self.cfg = cfg
        dims = [in_dim] + [cfg.hidden] * cfg.layers + [1]
        self.tensors = {}
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            self.tensors[f"disc/l{i}/w"] = ad.parameter(rng.uniform(-0.1, 0.1, (a, b)), f"disc/l{i}/w")
            self.tensors[f"disc/l{i}/b"] = ad.parameter(np.zeros(b), f"disc/l{i}/b")

    def values(self):
        return list(self.tensors.values())

    def state_dict(self):
        return {k: v.data for k, v in self.tensors.items()}

    def load_state_dict(self, state):
        for k, v in self.tensors.items():
            v.data = np.array(state[k], dtype=v.data.dtype)

    def logits(self, z):
        """Per-position logits for ``z`` of shape (N, D) or (B, T, D)."""
        n = len(self.tensors) // 2
        h = z
        for i in range(n):
            h = h @ self.tensors[f"disc/l{i}/w"] + self.tensors[f"disc/l{i}/b"]
            if i < n - 1:
                h = ad.leaky_relu(h, self.cfg.slope)
        return h.reshape(h.shape[:-1])


def disc_predict(disc, z, mask=None):
    """``p_D(tgt | z_j)`` per position, plus each sentence's mean log p(tgt).

    ``z`` is (B, T, D) with ``mask`` (B, T), or (N, D) for independent
    positions.  Masked positions are reported as NaN and do not contribute.
    """
    with ad.no_grad():
        lg = disc.logits(ad.Tensor(np.asarray(getattr(z, "data", z))))
    x = lg.data.astype(np.float64)
    p = ad._sigmoid(x)
    log_p = -np.logaddexp(0.0, -x)
    if mask is None:
        return p, log_p
    m = np.asarray(mask, dtype=bool)
    seq = (log_p * m).sum(axis=-1) / m.sum(axis=-1)
    return np.where(m, p, np.nan), seq


def _smoothed_ce(logits, mask, label, s):
    """Mean over sentences of the mean masked BCE against a smoothed ``label``."""
    target = label * (1 - s) + (1 - label) * s
    m = np.asarray(mask, dtype=ad.get_dtype())
    per_pos = ad.bce_with_logits(logits, np.full(logits.shape, target, dtype=ad.get_dtype()))
    per_sent = ad.sum_(per_pos * m, axis=-1) * (1.0 / m.sum(axis=-1))
    return ad.mean(per_sent)


def disc_loss(disc, enc_src, enc_tgt):
    """Discriminator cross-entropy on detached encoder states of both languages."""
    s = disc.cfg.smoothing
    loss = 0.0
    for enc, lang in ((enc_src, "src"), (enc_tgt, "tgt")):
        lg = disc.logits(enc.z.detach())
        loss = loss + _smoothed_ce(lg, enc.mask, LANG_LABEL[lang], s)
    return ad.mul(loss, 0.5)


def adv_loss(disc, enc, true_lang):
    """Encoder loss for fooling the discriminator: CE against the flipped label.

    The discriminator parameters are read through constant copies, so no
    gradient reaches them.
    """
    check_lang(true_lang)
    frozen = Discriminator.__new__(Discriminator)
    frozen.cfg = disc.cfg
    frozen.tensors = {k: ad.Tensor(v.data) for k, v in disc.tensors.items()}
    s = disc.cfg.smoothing if disc.cfg.smooth_adv else 0.0
    return _smoothed_ce(frozen.logits(enc.z), enc.mask, 1.0 - LANG_LABEL[true_lang], s)
