"""Vocabularies, monolingual datasets, padded batches and embedding files."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .errors import ContractError, FormatError

PAD, UNK, SOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<s>", "</s>")
LANGS = ("src", "tgt")


def check_lang(lang):
    if lang not in LANGS:
        raise ContractError(f"unknown language tag {lang!r}; expected one of {LANGS}")
    return lang


class Vocabulary:
    """Word <-> id mapping for one language.

    Ids 0..3 are PAD, UNK, SOS and EOS.  Each language owns its own table,
    so the start symbol is language dependent even though the id is shared.
    """

    def __init__(self, lang, words=()):
        self.lang = check_lang(lang)
        self.itos = list(RESERVED)
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        for w in words:
            self.add(w)

    def add(self, word):
        if word in self.stoi:
            if self.stoi[word] < len(RESERVED):
                raise ContractError(f"{word!r} is a reserved token")
            return self.stoi[word]
        self.stoi[word] = len(self.itos)
        self.itos.append(word)
        return self.stoi[word]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, word):
        return word in self.stoi and self.stoi[word] >= len(RESERVED)

    def id_of(self, word):
        return self.stoi.get(word, UNK)

    def word_of(self, idx):
        if not 0 <= idx < len(self.itos):
            raise ContractError(f"id {idx} outside vocabulary of size {len(self.itos)}")
        return self.itos[idx]

    @property
    def words(self):
        return self.itos[len(RESERVED):]

    def save(self, path):
        Path(path).write_text("\n".join(self.words) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, lang):
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        return cls(lang, [w for w in lines if w])


def _read_lines(source):
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return fh.read().splitlines()
    return list(source)


def build_vocab(corpus, min_count=0, lang="src"):
    """Vocabulary of words occurring more than ``min_count`` times.

    ``corpus`` is a file path or an iterable of lines.  Ids are assigned by
    descending count, ties broken lexicographically.
    """
    counts = Counter()
    for line in _read_lines(corpus):
        counts.update(line.split())
    if not counts:
        raise ContractError("build_vocab: empty corpus")
    for w in RESERVED:
        counts.pop(w, None)
    kept = sorted((w for w, c in counts.items() if c > min_count), key=lambda w: (-counts[w], w))
    return Vocabulary(lang, kept)


def encode(vocab, text):
    toks = text.split() if isinstance(text, str) else list(text)
    if not toks:
        raise ContractError("encode: empty sentence")
    return np.array([vocab.id_of(t) for t in toks], dtype=np.int64)


def decode(vocab, ids):
    return " ".join(vocab.word_of(int(i)) for i in ids)


@dataclass
class MonolingualDataset:
    lang: str
    sentences: list
    path: str | None = None
    vocab: Vocabulary | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.sentences)

    def texts(self):
        return [decode(self.vocab, s) for s in self.sentences]


def load_corpus(source, vocab, max_len=50):
    """Encode a corpus, skipping blank lines and sentences longer than ``max_len``."""
    sents = []
    for line in _read_lines(source):
        toks = line.split()
        if not toks or (max_len and len(toks) > max_len):
            continue
        sents.append(encode(vocab, toks))
    path = str(source) if isinstance(source, (str, Path)) else None
    return MonolingualDataset(vocab.lang, sents, path, vocab)


@dataclass
class SeqBatch:
    ids: np.ndarray      # (B, L) int, PAD beyond each row's length
    lengths: np.ndarray  # (B,)
    lang: str
    index: np.ndarray | None = None  # dataset positions of the rows

    @property
    def mask(self):
        return np.arange(self.ids.shape[1])[None, :] < self.lengths[:, None]

    def __len__(self):
        return len(self.lengths)

    def rows(self):
        return [self.ids[i, :n] for i, n in enumerate(self.lengths)]


def pad_batch(seqs, lang, index=None):
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    if (lengths < 1).any():
        raise ContractError("pad_batch: empty sentence")
    ids = np.full((len(seqs), int(lengths.max())), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
    return SeqBatch(ids, lengths, lang, None if index is None else np.asarray(index))


def make_batches(dataset, batch_size, seed):
    """One epoch: a seeded shuffle of ``dataset`` cut into consecutive batches."""
    if batch_size < 1:
        raise ContractError("batch_size must be >= 1")
    order = rngmod.stream(seed, f"batches/{dataset.lang}").permutation(len(dataset))
    return [
        pad_batch([dataset.sentences[i] for i in order[s:s + batch_size]], dataset.lang, order[s:s + batch_size])
        for s in range(0, len(order), batch_size)
    ]


def init_uniform(rng, shape, scale=0.1, dtype=np.float32):
    return rng.uniform(-scale, scale, size=shape).astype(dtype)


def embedding_matrix(vocab, table, dim, rng, scale=0.1):
    """Rows of ``table`` (word -> vector) for ``vocab``; the rest uniform random.

    Returns ``(matrix, coverage)`` where coverage is the fraction of
    non-reserved words that received a vector from ``table``.
    """
    emb = init_uniform(rng, (len(vocab), dim), scale)
    hit = 0
    for i, w in enumerate(vocab.itos):
        if i >= len(RESERVED) and w in table:
            emb[i] = table[w]
            hit += 1
    n = len(vocab) - len(RESERVED)
    return emb, (hit / n if n else 0.0)


def load_embeddings(vocab, path, dim, rng, scale=0.1):
    """Embedding matrix for ``vocab`` from a ``word v1 ... vn`` text file.

    Rows missing from the file, and the reserved tokens, are drawn uniformly
    from ``[-scale, scale]``.  A leading ``count dim`` header line (fastText
    ``.vec``) is skipped.  Returns ``(matrix, coverage)``.
    """
    table = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            if len(parts) != dim + 1:
                raise FormatError(f"expected {dim} values, got {len(parts) - 1}", path, lineno)
            if parts[0] in vocab and parts[0] not in table:
                try:
                    table[parts[0]] = np.array(parts[1:], dtype=np.float32)
                except ValueError:
                    raise FormatError("non-numeric embedding value", path, lineno) from None
    return embedding_matrix(vocab, table, dim, rng, scale)


def save_embeddings(path, words, matrix):
    with open(path, "w", encoding="utf-8") as fh:
        for w, row in zip(words, matrix):
            fh.write(w + " " + " ".join(f"{x:.6f}" for x in row) + "\n")
