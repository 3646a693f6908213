"""Synthetic language pairs with a known lexicon and word-order rule.

Source sentences come from a class-level Markov chain ("template") whose
words are drawn per class with Zipf weights.  The target language is the
image of the same process under a bijective lexicon followed by a
positional reordering rule, so every sentence has an exact reference
translation.  The two monolingual sides are drawn from disjoint random
streams and share distribution, not content.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .corpus import save_embeddings
from .errors import ContractError
from .translator import Lexicon

REORDER_RULES = ("none", "adjacent-swap", "block-reverse")


@dataclass(frozen=True)
class SynthSpec:
    vocab_size: int = 100
    min_len: int = 3
    max_len: int = 10
    n_mono: int = 5000
    n_valid: int = 500
    n_test: int = 500
    reorder: str = "adjacent-swap"
    block_width: int = 3
    zipf: float = 1.1
    n_classes: int = 6
    seed: int = 0
    emb_dim: int = 64
    # fraction of lexicon entries replaced by a wrong word in the emitted
    # (induced) lexicon; the ground truth is always kept separately
    lexicon_noise: float = 0.0

    def __post_init__(self):
        if self.vocab_size < 10:
            raise ContractError("vocab_size must be >= 10")
        if min(self.n_mono, self.n_valid, self.n_test) < 1:
            raise ContractError("sentence counts must be >= 1")
        if not 1 <= self.min_len <= self.max_len:
            raise ContractError("need 1 <= min_len <= max_len")
        if self.reorder not in REORDER_RULES:
            raise ContractError(f"reorder must be one of {REORDER_RULES}")
        if self.n_classes < 1 or self.n_classes > self.vocab_size:
            raise ContractError("n_classes must be in [1, vocab_size]")


def reorder_positions(n, rule, width=3):
    """Index array ``p`` such that reordered[i] = original[p[i]]."""
    idx = np.arange(n)
    if rule == "none":
        return idx
    if rule == "adjacent-swap":
        for i in range(0, n - 1, 2):
            idx[i], idx[i + 1] = idx[i + 1], idx[i]
        return idx
    if rule == "block-reverse":
        for s in range(0, n, width):
            idx[s:s + width] = idx[s:s + width][::-1]
        return idx
    raise ContractError(f"unknown reorder rule {rule!r}")


@dataclass
class Grammar:
    src_words: list
    tgt_words: list
    word_class: np.ndarray          # class of each source word index
    class_words: list               # per class: source word indices, by rank
    class_probs: list               # per class: Zipf weights
    start: np.ndarray               # initial class distribution
    trans: np.ndarray               # class transition matrix
    lexicon: dict = field(default_factory=dict)  # src word -> tgt word (ground truth)


def build_grammar(spec):
    rng = rngmod.stream(spec.seed, "synth/grammar")
    V, C = spec.vocab_size, spec.n_classes
    src_words = [f"s{i:03d}" for i in range(V)]
    tgt_words = [f"t{i:03d}" for i in range(V)]
    word_class = np.arange(V) % C
    class_words = [list(np.flatnonzero(word_class == c)) for c in range(C)]
    class_probs = []
    for ws in class_words:
        w = 1.0 / np.arange(1, len(ws) + 1) ** spec.zipf
        class_probs.append(w / w.sum())
    # each class has one dominant successor and one secondary one
    trans = np.full((C, C), 0.02 / max(C, 1))
    perm = rng.permutation(C)
    for c in range(C):
        trans[c, perm[(np.flatnonzero(perm == c)[0] + 1) % C]] += 0.7
        trans[c, rng.integers(C)] += 0.25
    trans /= trans.sum(axis=1, keepdims=True)
    start = rng.dirichlet(np.ones(C))
    tgt_perm = rng.permutation(V)
    lexicon = {src_words[i]: tgt_words[tgt_perm[i]] for i in range(V)}
    return Grammar(src_words, tgt_words, word_class, class_words, class_probs, start, trans, lexicon)


def sample_source(grammar, spec, rng, n):
    out = []
    C = len(grammar.class_words)
    for _ in range(n):
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        c = rng.choice(C, p=grammar.start)
        sent = []
        for _ in range(length):
            ws = grammar.class_words[c]
            sent.append(grammar.src_words[ws[rng.choice(len(ws), p=grammar.class_probs[c])]])
            c = rng.choice(C, p=grammar.trans[c])
        out.append(sent)
    return out


def ground_truth_translate(spec, sentence, direction="src-tgt", grammar=None):
    """Exact translation: lexicon substitution plus the reordering rule (or its inverse)."""
    grammar = grammar or build_grammar(spec)
    toks = sentence.split() if isinstance(sentence, str) else list(sentence)
    if direction == "src-tgt":
        table = grammar.lexicon
    elif direction == "tgt-src":
        table = {v: k for k, v in grammar.lexicon.items()}
    else:
        raise ContractError(f"unknown direction {direction!r}")
    try:
        words = [table[w] for w in toks]
    except KeyError as e:
        raise ContractError(f"token {e.args[0]!r} not in the {direction.split('-')[0]} vocabulary") from None
    p = reorder_positions(len(words), spec.reorder, spec.block_width)
    if direction == "src-tgt":
        out = [words[i] for i in p]
    else:
        out = [None] * len(words)
        for i, j in enumerate(p):
            out[j] = words[i]
    return " ".join(out) if isinstance(sentence, str) else out


@dataclass
class SynthData:
    spec: SynthSpec
    grammar: Grammar
    train_src: list
    train_tgt: list
    valid_src: list        # monolingual validation (model selection only)
    valid_tgt: list
    test_src: list         # parallel test set
    test_tgt: list
    lexicon: Lexicon       # induced lexicon used for the bootstrap model
    embeddings: dict       # lang -> (words, matrix)

    @property
    def true_lexicon(self):
        return Lexicon(self.grammar.lexicon)


def _lines(sents):
    return [" ".join(s) for s in sents]


def generate(spec, out_dir=None):
    """Generate monolingual, validation and parallel test sets for ``spec``.

    When ``out_dir`` is given the corpora, lexicons and aligned embedding
    files are written there as UTF-8 text.
    """
    g = build_grammar(spec)
    gt = lambda s: ground_truth_translate(spec, s, "src-tgt", g)  # noqa: E731

    def fresh(label, n, exclude):
        rng = rngmod.stream(spec.seed, label)
        got, seen = [], set()
        # bounded retries: tiny grammars may not have n distinct unseen sentences
        for _ in range(50):
            for s in sample_source(g, spec, rng, n - len(got)):
                key = " ".join(s)
                if key in exclude or key in seen:
                    continue
                seen.add(key)
                got.append(s)
            if len(got) >= n:
                break
        return got

    train_src = fresh("synth/train-src", spec.n_mono, set())
    used = set(_lines(train_src))
    tgt_pre = fresh("synth/train-tgt", spec.n_mono, used)
    used |= set(_lines(tgt_pre))
    valid_src = fresh("synth/valid-src", spec.n_valid, used)
    used |= set(_lines(valid_src))
    valid_pre = fresh("synth/valid-tgt", spec.n_valid, used)
    used |= set(_lines(valid_pre))
    test_src = fresh("synth/test", spec.n_test, used)

    lexicon = Lexicon(g.lexicon)
    if spec.lexicon_noise > 0:
        lrng = rngmod.stream(spec.seed, "synth/lexicon-noise")
        keys = list(lexicon)
        for i in np.flatnonzero(lrng.random(len(keys)) < spec.lexicon_noise):
            lexicon[keys[i]] = g.tgt_words[int(lrng.integers(len(g.tgt_words)))]

    erng = rngmod.stream(spec.seed, "synth/embeddings")
    C = len(g.class_words)
    centroids = erng.normal(0, 0.1, size=(C, spec.emb_dim))
    src_vec = centroids[g.word_class] + erng.normal(0, 0.05, size=(spec.vocab_size, spec.emb_dim))
    inv = {v: k for k, v in g.lexicon.items()}
    src_index = {w: i for i, w in enumerate(g.src_words)}
    tgt_vec = np.stack([src_vec[src_index[inv[w]]] for w in g.tgt_words])
    tgt_vec = tgt_vec + erng.normal(0, 0.01, size=tgt_vec.shape)

    data = SynthData(
        spec, g,
        train_src=_lines(train_src),
        train_tgt=_lines(gt(s) for s in tgt_pre),
        valid_src=_lines(valid_src),
        valid_tgt=_lines(gt(s) for s in valid_pre),
        test_src=_lines(test_src),
        test_tgt=_lines(gt(s) for s in test_src),
        lexicon=lexicon,
        embeddings={"src": (g.src_words, src_vec), "tgt": (g.tgt_words, tgt_vec)},
    )
    if out_dir is not None:
        write(data, out_dir)
    return data


FILES = {
    "train_src": "train.src", "train_tgt": "train.tgt",
    "valid_src": "valid.src", "valid_tgt": "valid.tgt",
    "test_src": "test.src", "test_tgt": "test.tgt",
}


def write(data, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for attr, name in FILES.items():
        (out / name).write_text("\n".join(getattr(data, attr)) + "\n", encoding="utf-8")
    data.lexicon.save(out / "lexicon.src-tgt.tsv")
    data.lexicon.inverse().save(out / "lexicon.tgt-src.tsv")
    data.true_lexicon.save(out / "lexicon.true.tsv")
    for lang, (words, mat) in data.embeddings.items():
        save_embeddings(out / f"emb.{lang}.txt", words, mat)
    (out / "synth.cfg").write_text("".join(f"{k} = {v}\n" for k, v in asdict(data.spec).items()), encoding="utf-8")
    return out


def enumerate_sentences(vocab, max_len):
    """All sentences over ``vocab`` of length 1..max_len (for exhaustive checks)."""
    for n in range(1, max_len + 1):
        yield from itertools.product(vocab, repeat=n)
