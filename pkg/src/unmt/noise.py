"""Sentence corruption C(x): word dropout followed by a bounded local shuffle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class NoiseConfig:
    p_wd: float = 0.1
    k: int = 3
    alpha: float | None = None  # defaults to k + 1

    def __post_init__(self):
        if not 0 <= self.p_wd < 1:
            raise ContractError(f"p_wd must be in [0, 1), got {self.p_wd}")
        if self.k < 0:
            raise ContractError(f"k must be >= 0, got {self.k}")
        if self.alpha is not None and self.alpha < 0:
            raise ContractError(f"alpha must be >= 0, got {self.alpha}")

    @property
    def temperature(self):
        return self.k + 1 if self.alpha is None else self.alpha


def sample_permutation(n, alpha, rng):
    """Argsort of ``q_i = i + U(0, alpha)``.

    With ``alpha <= k + 1`` no element moves more than ``k`` places; with
    ``alpha < 1`` the result is the identity.  Ties keep index order.
    """
    if n <= 1:
        return np.arange(n)
    q = np.arange(n) + rng.uniform(0, alpha, size=n)
    return np.argsort(q, kind="stable")


def drop_words(tokens, p_wd, rng):
    """Drop each token with probability ``p_wd``; never return an empty list."""
    tokens = list(tokens)
    if p_wd <= 0 or not tokens:
        return tokens
    keep = rng.random(len(tokens)) >= p_wd
    if not keep.any():
        keep[rng.integers(len(tokens))] = True
    return [t for t, k in zip(tokens, keep) if k]


def corrupt(tokens, cfg, rng):
    kept = drop_words(tokens, cfg.p_wd, rng)
    if cfg.temperature <= 0:
        return kept
    perm = sample_permutation(len(kept), cfg.temperature, rng)
    return [kept[i] for i in perm]
