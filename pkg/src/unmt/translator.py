"""Shared attentional encoder-decoder, greedy decoding and word-by-word translation.

One bidirectional LSTM encoder and one LSTM decoder serve both languages;
only the embedding tables and the output projections are per language.
The encoder output for position j is the concatenation of the forward and
backward states, ``z_j`` in R^(2H).  The decoder runs its LSTM over the gold
(or previously emitted) words, then attends over ``z`` with a bilinear score
and combines state and context through a tanh layer.  There is no input
feeding, so teacher-forced decoding is a single pass over time.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .corpus import EOS, LANGS, PAD, SOS, UNK, RESERVED, check_lang, pad_batch
from .errors import ContractError, DimensionError, FormatError


@dataclass(frozen=True)
class ArchConfig:
    emb_dim: int = 64
    hidden: int = 64
    layers: int = 1

    @classmethod
    def preset(cls, name):
        if name == "paper":
            return cls(300, 300, 3)
        if name == "desk":
            return cls(64, 64, 1)
        raise ContractError(f"unknown preset {name!r}")




class ModelParams:
    """All trainable tensors of the translator, keyed by name."""

    def __init__(self, arch, vocab_sizes, rng, embeddings=None, init_scale=0.1):
        self.arch = arch
        self.vocab_sizes = dict(vocab_sizes)
        E, H, L = arch.emb_dim, arch.hidden, arch.layers
        embeddings = embeddings or {}

        def _uniform(rng, shape):
            return rng.uniform(-init_scale, init_scale, size=shape)

        t = {}
        for lang in LANGS:
            init = embeddings.get(lang)
            if init is None:
                init = _uniform(rng, (self.vocab_sizes[lang], E))
            elif init.shape != (self.vocab_sizes[lang], E):
                raise DimensionError("embeddings", init.shape, (self.vocab_sizes[lang], E))
            t[f"emb/{lang}"] = init
        for layer in range(L):
            d_in = E if layer == 0 else 2 * H
            for direction in ("fwd", "bwd"):
                p = f"enc/l{layer}/{direction}"
                t[f"{p}/w_ih"] = _uniform(rng, (d_in, 4 * H))
                t[f"{p}/w_hh"] = _uniform(rng, (H, 4 * H))
                t[f"{p}/b"] = np.zeros(4 * H)
        t["dec/init/w"] = _uniform(rng, (2 * H, L * H))
        t["dec/init/b"] = np.zeros(L * H)
        for layer in range(L):
            d_in = E if layer == 0 else H
            p = f"dec/l{layer}"
            t[f"{p}/w_ih"] = _uniform(rng, (d_in, 4 * H))
            t[f"{p}/w_hh"] = _uniform(rng, (H, 4 * H))
            t[f"{p}/b"] = np.zeros(4 * H)
        t["dec/attn/w"] = _uniform(rng, (H, 2 * H))
        t["dec/out/w"] = _uniform(rng, (3 * H, H))
        t["dec/out/b"] = np.zeros(H)
        for lang in LANGS:
            t[f"dec/proj/{lang}/w"] = _uniform(rng, (H, self.vocab_sizes[lang]))
            t[f"dec/proj/{lang}/b"] = np.zeros(self.vocab_sizes[lang])
        self.tensors = {k: ad.parameter(v, name=k) for k, v in t.items()}

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def values(self):
        return list(self.tensors.values())

    def encoder_params(self):
        """Parameters the adversarial loss may update: embeddings and encoder."""
        return [v for k, v in self.tensors.items() if k.startswith(("emb/", "enc/"))]

    def state_dict(self):
        return {k: v.data for k, v in self.tensors.items()}

    def load_state_dict(self, state):
        for k, v in self.tensors.items():
            if state[k].shape != v.data.shape:
                raise DimensionError(f"load {k}", state[k].shape, v.data.shape)
            v.data = np.array(state[k], dtype=v.data.dtype)

    def copy(self):
        other = copy.copy(self)
        other.tensors = {k: ad.parameter(v.data.copy(), name=k) for k, v in self.tensors.items()}
        return other


@dataclass
class Encoded:
    z: ad.Tensor         # (B, T, 2H), zero at PAD positions
    mask: np.ndarray     # (B, T) bool
    final: ad.Tensor     # (B, 2H): last forward state and first backward state


def _reverse_index(lengths, T):
    t = np.arange(T)[None, :]
    n = lengths[:, None]
    return np.where(t < n, n - 1 - t, t)


def encode(params, batch, lang):
    """Run the shared encoder over ``batch`` using the lookup table of ``lang``."""
    check_lang(lang)
    if batch.lang != lang:
        raise ContractError(f"encode: batch language {batch.lang!r} != {lang!r}")
    B, T = batch.ids.shape
    H = params.arch.hidden
    mask = batch.mask
    fmask = mask.astype(ad.get_dtype())
    rows = np.arange(B)[:, None]
    rev = _reverse_index(batch.lengths, T)
    h0 = ad.Tensor(np.zeros((B, H), dtype=ad.get_dtype()))
    x = ad.embedding(params[f"emb/{lang}"], batch.ids)
    for layer in range(params.arch.layers):
        outs, finals = [], []
        for direction in ("fwd", "bwd"):
            p = f"enc/l{layer}/{direction}"
            xin = x if direction == "fwd" else x[rows, rev]
            gx = xin @ params[f"{p}/w_ih"] + params[f"{p}/b"]
            hs = ad.lstm_scan(gx, params[f"{p}/w_hh"], h0, fmask)
            finals.append(hs[:, -1])
            outs.append(hs if direction == "fwd" else hs[rows, rev])
        x = ad.concat(outs, axis=-1) * fmask[:, :, None]
    return Encoded(x, mask, ad.concat(finals, axis=-1))


def _decoder_init(params, enc):
    H, L = params.arch.hidden, params.arch.layers
    h = ad.tanh(enc.final @ params["dec/init/w"] + params["dec/init/b"])
    return [h[:, i * H:(i + 1) * H] for i in range(L)]


def decode_teacher_forced(params, enc, lang, dec_in):
    """Logits (B, T_out, |V_lang|) for decoder inputs ``dec_in`` (SOS-prefixed ids)."""
    check_lang(lang)
    dec_in = np.asarray(dec_in)
    if dec_in.ndim != 2 or dec_in.shape[0] != enc.z.shape[0]:
        raise DimensionError("decode_teacher_forced", dec_in.shape, enc.z.shape)
    tmask = (dec_in != PAD).astype(ad.get_dtype())
    tmask[:, 0] = 1
    h0s = _decoder_init(params, enc)
    x = ad.embedding(params[f"emb/{lang}"], dec_in)
    for layer in range(params.arch.layers):
        p = f"dec/l{layer}"
        gx = x @ params[f"{p}/w_ih"] + params[f"{p}/b"]
        x = ad.lstm_scan(gx, params[f"{p}/w_hh"], h0s[layer], tmask)
    scores = ad.matmul(x @ params["dec/attn/w"], ad.transpose(enc.z))
    attn = ad.softmax(scores, mask=enc.mask[:, None, :])
    ctx = ad.matmul(attn, enc.z)
    out = ad.tanh(ad.concat([x, ctx], axis=-1) @ params["dec/out/w"] + params["dec/out/b"])
    logits = out @ params[f"dec/proj/{lang}/w"] + params[f"dec/proj/{lang}/b"]
    return logits, attn


def teacher_forcing_batch(targets, lang):
    """Decoder inputs ``[SOS, y...]``, targets ``[y..., EOS]`` and their mask."""
    B = len(targets)
    T = max(len(t) for t in targets) + 1
    dec_in = np.full((B, T), PAD, dtype=np.int64)
    gold = np.full((B, T), PAD, dtype=np.int64)
    for i, y in enumerate(targets):
        dec_in[i, 0] = SOS
        dec_in[i, 1:len(y) + 1] = y
        gold[i, :len(y)] = y
        gold[i, len(y)] = EOS
    return dec_in, gold, gold != PAD


def sequence_nll(params, enc, lang, targets):
    """Token cross-entropy summed per sentence and averaged over the batch."""
    dec_in, gold, tmask = teacher_forcing_batch(targets, lang)
    logits, _ = decode_teacher_forced(params, enc, lang, dec_in)
    return ad.mul(ad.cross_entropy(logits, gold, tmask, reduction="sum"), 1.0 / len(targets))


# -- greedy decoding (numpy, no graph) ---------------------------------------
def _sig(x):
    return ad._sigmoid(x)


def _cell(x, h, c, w_ih, w_hh, b):
    H = h.shape[1]
    a = x @ w_ih + b + h @ w_hh
    i, f = _sig(a[:, :H]), _sig(a[:, H:2 * H])
    g, o = np.tanh(a[:, 2 * H:3 * H]), _sig(a[:, 3 * H:])
    c = f * c + i * g
    return o * np.tanh(c), c


def decode_greedy(params, enc, lang, max_len=None):
    """Emit argmax words from ``SOS_lang`` until EOS or the per-row length cap.

    ``max_len`` is an int, an array with one cap per row, or ``None`` for
    ``1.5 * source_length + 5``.  EOS is stripped.  PAD and SOS are never
    emitted.
    """
    check_lang(lang)
    P = {k: v.data for k, v in params.tensors.items()}
    z = enc.z.data
    B = z.shape[0]
    H, L = params.arch.hidden, params.arch.layers
    src_len = enc.mask.sum(axis=1)
    if max_len is None:
        caps = (1.5 * src_len + 5).astype(np.int64)
    else:
        caps = np.broadcast_to(np.asarray(max_len, dtype=np.int64), (B,)).copy()
    if (caps < 1).any():
        raise ContractError("decode_greedy: max_len must be >= 1")
    with ad.no_grad():
        hinit = np.tanh(enc.final.data @ P["dec/init/w"] + P["dec/init/b"])
    hs = [hinit[:, i * H:(i + 1) * H] for i in range(L)]
    cs = [np.zeros_like(h) for h in hs]
    keys = z  # (B, S, 2H)
    neg = np.where(enc.mask, 0.0, -np.inf)
    emb = P[f"emb/{lang}"]
    w_out, b_out = P[f"dec/proj/{lang}/w"], P[f"dec/proj/{lang}/b"]
    prev = np.full(B, SOS, dtype=np.int64)
    out = [[] for _ in range(B)]
    alive = np.ones(B, dtype=bool)
    for step in range(int(caps.max())):
        x = emb[prev]
        for layer in range(L):
            p = f"dec/l{layer}"
            hs[layer], cs[layer] = _cell(x, hs[layer], cs[layer], P[f"{p}/w_ih"], P[f"{p}/w_hh"], P[f"{p}/b"])
            x = hs[layer]
        q = x @ P["dec/attn/w"]
        scores = np.einsum("bh,bsh->bs", q, keys) + neg
        scores -= scores.max(axis=1, keepdims=True)
        a = np.exp(scores)
        a /= a.sum(axis=1, keepdims=True)
        ctx = np.einsum("bs,bsh->bh", a, keys)
        o = np.tanh(np.concatenate([x, ctx], axis=1) @ P["dec/out/w"] + P["dec/out/b"])
        logits = o @ w_out + b_out
        logits[:, PAD] = -np.inf
        logits[:, SOS] = -np.inf
        tok = logits.argmax(axis=1)
        for r in np.flatnonzero(alive):
            if tok[r] == EOS:
                alive[r] = False
            else:
                out[r].append(int(tok[r]))
                if len(out[r]) >= caps[r]:
                    alive[r] = False
        if not alive.any():
            break
        prev = tok
    return [np.array(o, dtype=np.int64) for o in out]


class TranslationModel:
    """Frozen ``d(e(., src_lang), tgt_lang)``; holds a private parameter copy."""

    def __init__(self, params, src_lang, tgt_lang):
        self.params = params.copy()
        for t in self.params.values():
            t.requires_grad = False
        self.src_lang = check_lang(src_lang)
        self.tgt_lang = check_lang(tgt_lang)

    def translate(self, sentences, batch_size=64, max_len=None):
        return translate(self, sentences, batch_size, max_len)


def translate(model, sentences, batch_size=64, max_len=None):
    """Translate a list of id sequences; output order matches input order."""
    single = len(sentences) > 0 and np.ndim(sentences[0]) == 0
    if single:
        sentences = [sentences]
    sentences = [np.asarray(s, dtype=np.int64) for s in sentences]
    # empty inputs (e.g. a model that emitted EOS at once) translate to empty outputs
    order = sorted((i for i in range(len(sentences)) if len(sentences[i])), key=lambda i: (len(sentences[i]), i))
    result = [np.zeros(0, dtype=np.int64) for _ in sentences]
    with ad.no_grad():
        for s in range(0, len(order), batch_size):
            idx = order[s:s + batch_size]
            batch = pad_batch([sentences[i] for i in idx], model.src_lang)
            enc = encode(model.params, batch, model.src_lang)
            for i, y in zip(idx, decode_greedy(model.params, enc, model.tgt_lang, max_len)):
                result[i] = y
    return result[0] if single else result


# -- lexicon and word-by-word baseline --------------------------------------
class Lexicon(dict):
    """Word -> word mapping from one language's surface forms to the other's."""

    @classmethod
    def load(cls, path):
        lex = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise FormatError("expected 'source<TAB>target'", path, lineno)
                lex.setdefault(parts[0], parts[1])
        return lex

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for k, v in self.items():
                fh.write(f"{k}\t{v}\n")

    def inverse(self):
        inv = Lexicon()
        for k, v in self.items():
            inv.setdefault(v, k)
        return inv


def wbw_translate(lexicon, sentence):
    """Replace each word through ``lexicon``; unknown words are copied unchanged."""
    toks = sentence.split() if isinstance(sentence, str) else list(sentence)
    out = [lexicon.get(w, w) for w in toks]
    return " ".join(out) if isinstance(sentence, str) else out


class WordByWordModel:
    """Id-level word-by-word translator with the :class:`TranslationModel` call shape."""

    def __init__(self, lexicon, src_vocab, tgt_vocab):
        self.src_lang, self.tgt_lang = src_vocab.lang, tgt_vocab.lang
        table = np.full(len(src_vocab), UNK, dtype=np.int64)
        for i, w in enumerate(src_vocab.itos):
            if i < len(RESERVED):
                continue
            table[i] = tgt_vocab.id_of(lexicon.get(w, w))
        self.table = table

    def translate(self, sentences, batch_size=None, max_len=None):
        single = len(sentences) > 0 and np.ndim(sentences[0]) == 0
        if single:
            return self.table[np.asarray(sentences)]
        return [self.table[np.asarray(s, dtype=np.int64)] for s in sentences]
