"""BLEU, round-trip model selection, rank correlation and reordering baselines."""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import autodiff as ad
from . import rng as rngmod
from .corpus import PAD, make_batches
from .errors import ContractError
from .optim import OptimizerState, adam_step, clip_grad_norm
from .translator import teacher_forcing_batch

SMOOTHING = "add-one on numerator and denominator of p_n (n >= 2) when its clipped count is zero"


@dataclass
class BleuReport:
    bleu: float
    precisions: list
    brevity_penalty: float
    cand_len: int
    ref_len: int
    smoothing: str = SMOOTHING

    def __str__(self):
        ps = "/".join(f"{100 * p:.1f}" for p in self.precisions)
        return (f"BLEU = {self.bleu:.2f}, {ps} (BP={self.brevity_penalty:.3f}, "
                f"hyp_len={self.cand_len}, ref_len={self.ref_len})")


def _tokens(s):
    if isinstance(s, str):
        return s.split()
    return [int(t) if isinstance(t, (np.integer,)) else t for t in s]


def ngram_stats(cand, ref, max_n=4):
    """Clipped matches and candidate totals for n = 1..max_n."""
    matches, totals = [0] * max_n, [0] * max_n
    for n in range(1, max_n + 1):
        c = Counter(tuple(cand[i:i + n]) for i in range(len(cand) - n + 1))
        r = Counter(tuple(ref[i:i + n]) for i in range(len(ref) - n + 1))
        matches[n - 1] = sum(min(k, r[g]) for g, k in c.items())
        totals[n - 1] = max(len(cand) - n + 1, 0)
    return matches, totals


def bleu_from_stats(matches, totals, cand_len, ref_len):
    precisions = []
    for n, (m, t) in enumerate(zip(matches, totals), 1):
        if n >= 2 and m == 0:
            precisions.append((m + 1) / (t + 1))
        else:
            precisions.append(m / t if t else 0.0)
    if cand_len == 0 or precisions[0] == 0:
        bp = 0.0 if cand_len == 0 else (1.0 if cand_len > ref_len else math.exp(1 - ref_len / cand_len))
        return BleuReport(0.0, precisions, bp, cand_len, ref_len)
    bp = 1.0 if cand_len > ref_len else math.exp(1 - ref_len / cand_len)
    score = bp * math.exp(sum(math.log(p) for p in precisions) / len(precisions)) * 100
    return BleuReport(score, precisions, bp, cand_len, ref_len)


def bleu(candidates, references, max_n=4):
    """Corpus BLEU-4 with clipped counts, brevity penalty and the fixed smoothing rule."""
    if len(candidates) != len(references):
        raise ContractError(f"bleu: {len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise ContractError("bleu: empty candidate set")
    M, T = [0] * max_n, [0] * max_n
    c_len = r_len = 0
    for cand, ref in zip(candidates, references):
        cand, ref = _tokens(cand), _tokens(ref)
        m, t = ngram_stats(cand, ref, max_n)
        M = [a + b for a, b in zip(M, m)]
        T = [a + b for a, b in zip(T, t)]
        c_len += len(cand)
        r_len += len(ref)
    return bleu_from_stats(M, T, c_len, r_len)


def sentence_bleu(cand, ref):
    return bleu([cand], [ref]).bleu


def model_selection_score(m_src_tgt, m_tgt_src, valid_src, valid_tgt):
    """Mean of the two round-trip BLEU scores on monolingual validation sets.

    ``valid_src``/``valid_tgt`` are lists of id sequences.  Returns
    ``(ms, bleu_src_roundtrip, bleu_tgt_roundtrip)``.
    """
    back_src = m_tgt_src.translate(m_src_tgt.translate(valid_src))
    back_tgt = m_src_tgt.translate(m_tgt_src.translate(valid_tgt))
    b1 = bleu(back_src, valid_src).bleu
    b2 = bleu(back_tgt, valid_tgt).bleu
    return 0.5 * b1 + 0.5 * b2, b1, b2


def spearman(xs, ys):
    """Spearman rank correlation with average ranks for ties."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if len(xs) != len(ys) or len(xs) < 2:
        raise ContractError("spearman: need two sequences of equal length >= 2")
    rx, ry = rankdata(xs), rankdata(ys)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise ContractError("spearman: undefined for a constant sequence")
    rx, ry = rx - rx.mean(), ry - ry.mean()
    return float((rx @ ry) / math.sqrt((rx @ rx) * (ry @ ry)))


# -- language model for the word-reordering baseline -------------------------
class LanguageModel:
    """Single-direction LSTM language model over one vocabulary."""

    def __init__(self, vocab_size, dim=64, hidden=64, seed=0):
        rng = rngmod.stream(seed, "lm/init")
        u = lambda *s: rng.uniform(-0.1, 0.1, size=s)  # noqa: E731
        self.tensors = {
            "emb": ad.parameter(u(vocab_size, dim), "emb"),
            "w_ih": ad.parameter(u(dim, 4 * hidden), "w_ih"),
            "w_hh": ad.parameter(u(hidden, 4 * hidden), "w_hh"),
            "b": ad.parameter(np.zeros(4 * hidden), "b"),
            "proj/w": ad.parameter(u(hidden, vocab_size), "proj/w"),
            "proj/b": ad.parameter(np.zeros(vocab_size), "proj/b"),
        }
        self.hidden = hidden

    def values(self):
        return list(self.tensors.values())

    def nll(self, sentences, reduction="sum"):
        """Per-sentence negative log-likelihood (a Tensor of shape (B,) for ``"none"``)."""
        t = self.tensors
        dec_in, gold, mask = teacher_forcing_batch(sentences, "tgt")
        B = len(sentences)
        x = ad.embedding(t["emb"], dec_in)
        h0 = ad.Tensor(np.zeros((B, self.hidden), dtype=ad.get_dtype()))
        hs = ad.lstm_scan(x @ t["w_ih"] + t["b"], t["w_hh"], h0, dec_in != PAD)
        logits = hs @ t["proj/w"] + t["proj/b"]
        tok = ad.cross_entropy(logits, gold, mask, reduction="none")
        if reduction == "none":
            return ad.sum_(tok, axis=1)
        return ad.mul(ad.sum_(tok), 1.0 / B)

    def log_prob(self, sentences, batch_size=256):
        """Log-probability of each sentence (including the end symbol)."""
        out = []
        with ad.no_grad():
            for s in range(0, len(sentences), batch_size):
                out.extend((-self.nll(sentences[s:s + batch_size], "none").data).tolist())
        return np.array(out)


def train_lm(dataset, dim=64, hidden=64, epochs=3, batch_size=32, lr=1e-3, clip=5.0, seed=0):
    lm = LanguageModel(len(dataset.vocab), dim, hidden, seed)
    params = lm.values()
    state = OptimizerState.adam(params, lr=lr, beta1=0.9)
    for epoch in range(epochs):
        for batch in make_batches(dataset, batch_size, seed * 1000 + epoch):
            ad.zero_grad(params)
            ad.backward(lm.nll(batch.rows()))
            grads, _ = clip_grad_norm([p.grad for p in params], clip)
            adam_step(params, grads, state)
    return lm


def word_reorder(sentence, lm, rounds=10):
    """Greedy hill-climbing over adjacent swaps under ``lm``; at most ``rounds`` swaps."""
    cur = list(sentence)
    if len(cur) < 2:
        return cur
    best = lm.log_prob([cur])[0]
    for _ in range(rounds):
        variants = []
        for i in range(len(cur) - 1):
            v = cur[:]
            v[i], v[i + 1] = v[i + 1], v[i]
            variants.append(v)
        scores = lm.log_prob(variants)
        j = int(np.argmax(scores))
        if scores[j] <= best:
            break
        cur, best = variants[j], scores[j]
    return cur


def oracle_reorder(tokens, reference, exact_max=8):
    """Permutation of ``tokens`` with the highest sentence BLEU against ``reference``.

    Exhaustive for at most ``exact_max`` tokens.  Longer inputs use a greedy
    construction: walk the reference, emit each reference word still
    available, then fill the gaps with the leftovers in input order.  The
    result is never worse than the input order.
    """
    tokens, reference = list(tokens), list(reference)
    if Counter(tokens) == Counter(reference):
        return reference
    if len(tokens) <= exact_max:
        best, best_score = tokens, sentence_bleu(tokens, reference)
        for perm in set(itertools.permutations(tokens)):
            sc = sentence_bleu(perm, reference)
            if sc > best_score:
                best, best_score = list(perm), sc
        return best
    avail = Counter(tokens)
    slots = []
    for w in reference:
        if avail[w] > 0:
            avail[w] -= 1
            slots.append(w)
        else:
            slots.append(None)
    left = []
    rem = Counter(avail)
    for w in tokens:
        if rem[w] > 0:
            rem[w] -= 1
            left.append(w)
    out = []
    for w in slots:
        if w is not None:
            out.append(w)
        elif left:
            out.append(left.pop(0))
    out.extend(left)
    return out if sentence_bleu(out, reference) >= sentence_bleu(tokens, reference) else tokens
