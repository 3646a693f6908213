"""Loss terms, the alternating update schedule and the iterative training loop.

One encoder/decoder update minimises

    lambda_auto * [L_auto(src) + L_auto(tgt)]
  + lambda_cd   * [L_cd(src -> tgt -> src) + L_cd(tgt -> src -> tgt)]
  + lambda_adv  * L_adv

and is preceded by one discriminator update.  Each outer iteration
back-translates both monolingual corpora once with the previous model
(word-by-word at the first iteration), trains for a fixed number of epochs
and hands the model with the best round-trip score to the next iteration.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import rng as rngmod
from .adversary import Discriminator, adv_loss, disc_loss
from .checkpoint import read_checkpoint, write_checkpoint
from .config import ExperimentConfig, parse_config_text
from .corpus import (
    LANGS, MonolingualDataset, build_vocab, decode, encode as encode_text, embedding_matrix,
    load_corpus, load_embeddings, make_batches, pad_batch,
)
from .errors import ContractError, NumericError
from .evaluation import bleu, model_selection_score
from .noise import corrupt
from .optim import OptimizerState, adam_step, clip_grad_norm, rmsprop_step
from .translator import Lexicon, ModelParams, TranslationModel, WordByWordModel, encode, sequence_nll

log = logging.getLogger("unmt")

OTHER = {"src": "tgt", "tgt": "src"}
METRIC_COLUMNS = [
    "iter", "epoch", "step", "loss_total", "loss_auto_src", "loss_auto_tgt", "loss_cd_src",
    "loss_cd_tgt", "loss_adv", "loss_disc", "ms_score", "bleu_src_tgt", "bleu_tgt_src",
]
LOSS_KEYS = METRIC_COLUMNS[3:10]


# -- data bundle ------------------------------------------------------------
@dataclass
class Corpora:
    vocab: dict           # lang -> Vocabulary
    train: dict           # lang -> MonolingualDataset
    valid: dict           # lang -> list of id arrays (monolingual)
    test: dict | None     # lang -> list of token lists, aligned across languages
    lexicon: Lexicon | None = None
    embeddings: dict | None = None  # lang -> matrix aligned with vocab


def _split(lines):
    return [l.split() for l in lines if l.strip()]


def build_corpora(train, valid, test=None, lexicon=None, emb_tables=None, config=None):
    """Assemble :class:`Corpora` from raw lines.

    ``train``/``valid`` map language -> list of lines, ``test`` maps
    language -> aligned list of lines, ``emb_tables`` maps language ->
    ``{word: vector}``.
    """
    cfg = (config or ExperimentConfig()).resolved()
    vocab = {l: build_vocab(train[l], cfg.data_min_count, l) for l in LANGS}
    data = {l: load_corpus(train[l], vocab[l], cfg.data_max_len) for l in LANGS}
    val = {l: [encode_text(vocab[l], s) for s in _split(valid[l])] for l in LANGS}
    tst = None
    if test is not None:
        pairs = [(a.split(), b.split()) for a, b in zip(test["src"], test["tgt"]) if a.strip() and b.strip()]
        tst = {"src": [p[0] for p in pairs], "tgt": [p[1] for p in pairs]}
    emb = None
    if emb_tables:
        emb = {}
        for l in LANGS:
            rng = rngmod.stream(cfg.seed, f"init/emb/{l}")
            emb[l], cov = embedding_matrix(vocab[l], emb_tables[l], cfg.model_emb_dim, rng)
            log.info("embeddings %s: coverage %.3f", l, cov)
    return Corpora(vocab, data, val, tst, lexicon, emb)


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def load_corpora(config):
    """Load every data file named in ``config``."""
    cfg = config.resolved()
    for k in ("data_src", "data_tgt", "data_valid_src", "data_valid_tgt"):
        if getattr(cfg, k) is None:
            raise ContractError(f"config is missing {k.replace('_', '.', 1)}")
    train = {"src": _read(cfg.data_src), "tgt": _read(cfg.data_tgt)}
    valid = {"src": _read(cfg.data_valid_src), "tgt": _read(cfg.data_valid_tgt)}
    test = None
    if cfg.data_test_src and cfg.data_test_tgt:
        test = {"src": _read(cfg.data_test_src), "tgt": _read(cfg.data_test_tgt)}
    lexicon = Lexicon.load(cfg.data_lexicon) if cfg.data_lexicon else None
    corp = build_corpora(train, valid, test, lexicon, None, cfg)
    if cfg.data_emb_src and cfg.data_emb_tgt:
        corp.embeddings = {}
        for l, p in (("src", cfg.data_emb_src), ("tgt", cfg.data_emb_tgt)):
            rng = rngmod.stream(cfg.seed, f"init/emb/{l}")
            corp.embeddings[l], cov = load_embeddings(corp.vocab[l], p, cfg.model_emb_dim, rng)
            log.info("embeddings %s: coverage %.3f", l, cov)
    return corp


def corpora_from_synth(data, config=None):
    tables = {l: dict(zip(words, mat)) for l, (words, mat) in data.embeddings.items()}
    return build_corpora(
        {"src": data.train_src, "tgt": data.train_tgt},
        {"src": data.valid_src, "tgt": data.valid_tgt},
        {"src": data.test_src, "tgt": data.test_tgt},
        data.lexicon, tables, config,
    )


# -- loss terms ---------------------------------------------------------------
def _corrupted_batch(rows, lang, noise_cfg, rng):
    return pad_batch([np.asarray(corrupt(r, noise_cfg, rng), dtype=np.int64) for r in rows], lang)


def loss_auto(params, batch, lang, noise_cfg, rng, return_encoding=False):
    """Denoising reconstruction: decode ``C(x)`` in ``lang`` back to ``x``."""
    rows = batch.rows()
    enc = encode(params, _corrupted_batch(rows, lang, noise_cfg, rng), lang)
    loss = sequence_nll(params, enc, lang, rows)
    return (loss, enc) if return_encoding else loss


def loss_cd(params, batch, l1, l2, back, noise_cfg, rng, stats=None):
    """Cross-domain reconstruction: decode ``C(y)`` (``y`` in ``l2``) back to ``x`` in ``l1``.

    ``back`` is either a list of stored translations aligned with the
    dataset (indexed through ``batch.index``) or a frozen model with a
    ``translate`` method.  Sentences whose translation is empty are skipped.
    """
    rows = batch.rows()
    if hasattr(back, "translate"):
        ys = back.translate(rows)
    else:
        ys = [back[int(i)] for i in batch.index]
    keep = [i for i, y in enumerate(ys) if len(y) > 0]
    if stats is not None:
        stats["cd_skipped"] = stats.get("cd_skipped", 0) + len(rows) - len(keep)
    if not keep:
        return ad.Tensor(np.zeros((), dtype=ad.get_dtype()))
    enc = encode(params, _corrupted_batch([ys[i] for i in keep], l2, noise_cfg, rng), l2)
    return sequence_nll(params, enc, l1, [rows[i] for i in keep])


def total_loss(components, config):
    """Weighted sum of precomputed components (Tensors keyed like the metrics columns)."""
    zero = ad.Tensor(np.zeros((), dtype=ad.get_dtype()))
    terms = []
    pairs = (("lambda_auto", ("loss_auto_src", "loss_auto_tgt")),
             ("lambda_cd", ("loss_cd_src", "loss_cd_tgt")),
             ("lambda_adv", ("loss_adv",)))
    for lam_key, keys in pairs:
        lam = getattr(config, lam_key)
        parts = [components[k] for k in keys if components.get(k) is not None]
        if lam and parts:
            s = parts[0]
            for p in parts[1:]:
                s = s + p
            terms.append(ad.mul(s, lam))
    out = zero
    for t in terms:
        out = out + t
    return out


# -- batching ---------------------------------------------------------------
class BatchStream:
    """Endless stream of epochs; each epoch reshuffled from ``(seed, label, epoch)``."""

    def __init__(self, dataset, batch_size, seed, label):
        self.dataset, self.batch_size, self.seed, self.label = dataset, batch_size, seed, label
        self.epoch, self.pos = 0, 0
        self._batches = None

    def _load(self):
        s = int(rngmod.stream(self.seed, f"{self.label}/{self.epoch}").integers(2 ** 62))
        self._batches = make_batches(self.dataset, self.batch_size, s)

    def __next__(self):
        if self._batches is None:
            self._load()
        if self.pos >= len(self._batches):
            self.epoch, self.pos = self.epoch + 1, 0
            self._load()
        b = self._batches[self.pos]
        self.pos += 1
        return b

    def state(self):
        return [self.epoch, self.pos]

    def set_state(self, st):
        self.epoch, self.pos = st
        self._batches = None


# -- trainer ----------------------------------------------------------------
class Trainer:
    """Owns parameters, optimisers, RNG streams and history for one run."""

    def __init__(self, corpora, config, run_dir=None):
        self.corpora = corpora
        self.config = config
        self.cfg = cfg = config.resolved()
        self.run_dir = Path(run_dir) if run_dir else None
        sizes = {l: len(corpora.vocab[l]) for l in LANGS}
        emb = corpora.embeddings if (cfg.init_pretrained and corpora.embeddings) else None
        self.params = ModelParams(cfg.arch, sizes, rngmod.stream(cfg.seed, "init/model"), emb)
        self.disc = Discriminator(2 * cfg.model_hidden, cfg.disc, rngmod.stream(cfg.seed, "init/disc"))
        self.opt = OptimizerState.adam(self.params.values(), cfg.optim_lr, cfg.optim_beta1, cfg.optim_beta2)
        self.dopt = OptimizerState.rmsprop(self.disc.values(), lr=cfg.adv_lr)
        self.noise_rng = rngmod.stream(cfg.seed, "noise")
        bs = cfg.train_batch_size
        self.streams = {}
        for l in LANGS:
            self.streams[f"auto/{l}"] = BatchStream(corpora.train[l], bs, cfg.seed, f"auto/{l}")
            self.streams[f"disc/{l}"] = BatchStream(corpora.train[l], bs, cfg.seed, f"disc/{l}")
        n = max(len(corpora.train[l]) for l in LANGS)
        self.steps_per_epoch = math.ceil(n / bs)
        self.steps_per_iter = max(0, int(round(cfg.train_epochs * self.steps_per_epoch)))
        self.t = 1
        self.step_in_iter = 0
        self.global_step = 0
        self.history = []
        self.summary = []
        self.acc = {}
        self.stats = {}
        self.best = None        # (ms, row, state dict)
        self.prev_state = None  # parameters of M^(t) for t >= 2
        self.bt = None
        self.cd_streams = {}

    # -- previous model and back-translation --------------------------------
    def previous_models(self):
        """``{lang: model translating lang -> other}`` for M^(t), or None."""
        if self.t == 1:
            v = self.corpora.vocab
            if self.cfg.init_model == "none":
                return None
            if self.cfg.init_model == "wbw":
                if self.corpora.lexicon is None:
                    raise ContractError("init.model = wbw needs a lexicon")
                lex = self.corpora.lexicon
            else:
                lex = Lexicon()
            return {"src": WordByWordModel(lex, v["src"], v["tgt"]),
                    "tgt": WordByWordModel(lex.inverse(), v["tgt"], v["src"])}
        prev = self.params.copy()
        prev.load_state_dict(self.prev_state)
        return {l: TranslationModel(prev, l, OTHER[l]) for l in LANGS}

    def back_translate(self):
        models = self.previous_models()
        self.bt, self.cd_streams = None, {}
        if models is None or self.cfg.lambda_cd == 0:
            return
        self.bt = {}
        for l in LANGS:
            ds = self.corpora.train[l]
            sents = ds.sentences
            k = self.cfg.train_bt_subsample
            if k and k < len(sents):
                idx = np.sort(rngmod.stream(self.cfg.seed, f"bt/{self.t}/{l}").choice(len(sents), k, replace=False))
                sents = [sents[i] for i in idx]
                ds = MonolingualDataset(l, sents, ds.path, ds.vocab)
            self.bt[l] = models[l].translate(sents)
            self.cd_streams[l] = BatchStream(ds, self.cfg.train_batch_size, self.cfg.seed, f"cd/{l}/{self.t}")

    # -- one paired update ------------------------------------------------------
    def disc_step(self):
        bs = {l: next(self.streams[f"disc/{l}"]) for l in LANGS}
        with ad.no_grad():
            encs = {l: encode(self.params, bs[l], l) for l in LANGS}
        loss = disc_loss(self.disc, encs["src"], encs["tgt"])
        params = self.disc.values()
        ad.zero_grad(params)
        ad.backward(loss)
        rmsprop_step(params, [p.grad for p in params], self.dopt)
        return loss.item()

    def model_step(self):
        cfg = self.cfg
        rng = self.noise_rng
        comps, encs = {}, {}
        for l in LANGS:
            batch = next(self.streams[f"auto/{l}"])
            if cfg.lambda_auto > 0:
                comps[f"loss_auto_{l}"], encs[l] = loss_auto(self.params, batch, l, cfg.noise, rng, True)
            elif cfg.lambda_adv > 0:
                encs[l] = encode(self.params, _corrupted_batch(batch.rows(), l, cfg.noise, rng), l)
        if self.bt is not None and cfg.lambda_cd > 0:
            for l in LANGS:
                batch = next(self.cd_streams[l])
                comps[f"loss_cd_{l}"] = loss_cd(self.params, batch, l, OTHER[l], self.bt[l], cfg.noise, rng, self.stats)
        if cfg.lambda_adv > 0:
            comps["loss_adv"] = ad.mul(adv_loss(self.disc, encs["src"], "src") + adv_loss(self.disc, encs["tgt"], "tgt"), 0.5)
        loss = total_loss(comps, cfg)
        if not np.isfinite(loss.data).all():
            self._dump_nonfinite(comps)
        params = self.params.values()
        ad.zero_grad(params)
        ad.backward(loss)
        grads, _ = clip_grad_norm([p.grad for p in params], cfg.optim_clip)
        adam_step(params, grads, self.opt)
        out = {k: v.item() for k, v in comps.items()}
        out["loss_total"] = loss.item()
        return out

    def _dump_nonfinite(self, comps):
        msg = "non-finite loss at iter %d step %d: %s" % (
            self.t, self.global_step, {k: v.item() for k, v in comps.items()})
        if self.run_dir is not None:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            (self.run_dir / "nonfinite.json").write_text(json.dumps({"message": msg, "state": self._state()}, default=str))
        raise NumericError(msg)

    def train_step(self):
        ld = self.disc_step()
        vals = self.model_step()
        vals["loss_disc"] = ld
        for k, v in vals.items():
            s = self.acc.setdefault(k, [0.0, 0])
            s[0] += v
            s[1] += 1
        self.step_in_iter += 1
        self.global_step += 1

    # -- evaluation -----------------------------------------------------------
    def translators(self):
        return TranslationModel(self.params, "src", "tgt"), TranslationModel(self.params, "tgt", "src")

    def test_bleu(self, m_st=None, m_ts=None):
        if self.corpora.test is None:
            return None, None
        if m_st is None:
            m_st, m_ts = self.translators()
        v = self.corpora.vocab
        out = []
        for m, a, b in ((m_st, "src", "tgt"), (m_ts, "tgt", "src")):
            ids = [encode_text(v[a], s) for s in self.corpora.test[a]]
            hyp = [decode(v[b], y).split() for y in m.translate(ids)]
            out.append(bleu(hyp, self.corpora.test[b]).bleu)
        return tuple(out)

    def evaluate(self):
        m_st, m_ts = self.translators()
        ms, _, _ = model_selection_score(m_st, m_ts, self.corpora.valid["src"], self.corpora.valid["tgt"])
        b_st, b_ts = self.test_bleu(m_st, m_ts)
        row = {"iter": self.t, "epoch": round(self.step_in_iter / self.steps_per_epoch, 4), "step": self.global_step}
        for k in LOSS_KEYS:
            s = self.acc.get(k)
            row[k] = s[0] / s[1] if s and s[1] else None
        row.update(ms_score=ms, bleu_src_tgt=b_st, bleu_tgt_src=b_ts)
        self.acc = {}
        self.history.append(row)
        if self.best is None or ms > self.best[0]:
            self.best = (ms, row, {k: v.copy() for k, v in self.params.state_dict().items()})
        log.info("iter %d step %d: ms %.2f bleu %s/%s", self.t, self.global_step, ms, _f(b_st), _f(b_ts))
        self.write_metrics()
        return row

    # -- outer loop -------------------------------------------------------------
    def start_iteration(self):
        if self.t >= 2:
            self.prev_state = {k: v.copy() for k, v in self.params.state_dict().items()}
        self.save_checkpoint()
        self.back_translate()
        self.evaluate()

    def end_iteration(self):
        if self.cfg.train_select_best and self.best is not None:
            self.params.load_state_dict(self.best[2])
        ms, row = (self.best[0], self.best[1]) if self.best else (None, None)
        self.summary.append({
            "iter": self.t, "ms_score": ms, "step": row["step"] if row else None,
            "bleu_src_tgt": row["bleu_src_tgt"] if row else None,
            "bleu_tgt_src": row["bleu_tgt_src"] if row else None,
            "cd_skipped": self.stats.get("cd_skipped", 0),
        })
        self.best = None
        self.t += 1
        self.step_in_iter = 0

    def run(self):
        cfg = self.cfg
        every = cfg.train_eval_every or self.steps_per_epoch
        while self.t <= cfg.train_iterations:
            if self.step_in_iter == 0:
                self.start_iteration()
            elif self.bt is None and cfg.lambda_cd > 0:
                self.back_translate()
            while self.step_in_iter < self.steps_per_iter:
                self.train_step()
                s = self.step_in_iter
                if s % every == 0 or s == self.steps_per_iter:
                    self.evaluate()
                if cfg.train_checkpoint_epochs and s % self.steps_per_epoch == 0 and s < self.steps_per_iter:
                    self.save_checkpoint()
            self.end_iteration()
        if self.run_dir is not None:
            self.save_checkpoint(self.run_dir / "checkpoints" / "final.ckpt")
        return self

    # -- persistence ------------------------------------------------------------
    def write_metrics(self):
        if self.run_dir is None:
            return
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "metrics.csv").write_text(metrics_csv(self.history), encoding="utf-8")

    def _state(self):
        return {
            "t": self.t, "step_in_iter": self.step_in_iter, "global_step": self.global_step,
            "opt_step": self.opt.step, "dopt_step": self.dopt.step,
            "streams": {k: s.state() for k, s in self.streams.items()},
            "cd_streams": {k: s.state() for k, s in self.cd_streams.items()},
            "noise_rng": rngmod.get_state(self.noise_rng),
            "history": self.history, "summary": self.summary, "acc": self.acc, "stats": self.stats,
            "best": None if self.best is None else [self.best[0], self.best[1]],
        }

    def checkpoint_path(self):
        return self.run_dir / "checkpoints" / f"iter{self.t:02d}_step{self.step_in_iter:06d}.ckpt"

    def save_checkpoint(self, path=None):
        if path is None:
            if self.run_dir is None:
                return None
            path = self.checkpoint_path()
        rec = {f"model/{k}": v for k, v in self.params.state_dict().items()}
        rec.update({f"disc/{k}": v for k, v in self.disc.state_dict().items()})
        rec.update({f"opt/adam/{k}": v for k, v in self.opt.buffers().items()})
        rec.update({f"opt/rmsprop/{k}": v for k, v in self.dopt.buffers().items()})
        if self.prev_state is not None:
            rec.update({f"prev/{k}": v for k, v in self.prev_state.items()})
        if self.best is not None:
            rec.update({f"best/{k}": v for k, v in self.best[2].items()})
        return write_checkpoint(path, rec, self.config.to_text(), self._state())

    @classmethod
    def from_checkpoint(cls, path, corpora=None, run_dir=None):
        rec, cfg_text, st = read_checkpoint(path)
        config = parse_config_text(cfg_text, where=str(path))
        if corpora is None:
            corpora = load_corpora(config)
        tr = cls(corpora, config, run_dir)
        tr.params.load_state_dict({k[6:]: v for k, v in rec.items() if k.startswith("model/")})
        tr.disc.load_state_dict({k[5:]: v for k, v in rec.items() if k.startswith("disc/")})
        for state, prefix in ((tr.opt, "opt/adam/"), (tr.dopt, "opt/rmsprop/")):
            for i in range(len(state.v)):
                state.v[i][...] = rec[f"{prefix}v/{i}"]
            for i in range(len(state.m)):
                state.m[i][...] = rec[f"{prefix}m/{i}"]
        tr.opt.step, tr.dopt.step = st["opt_step"], st["dopt_step"]
        prev = {k[5:]: v for k, v in rec.items() if k.startswith("prev/")}
        tr.prev_state = prev or None
        tr.t, tr.step_in_iter, tr.global_step = st["t"], st["step_in_iter"], st["global_step"]
        for k, s in st["streams"].items():
            tr.streams[k].set_state(s)
        rngmod.set_state(tr.noise_rng, st["noise_rng"])
        tr.history, tr.summary, tr.acc, tr.stats = st["history"], st["summary"], st["acc"], st["stats"]
        if st["best"] is not None:
            best = {k[5:]: v for k, v in rec.items() if k.startswith("best/")}
            tr.best = (st["best"][0], st["best"][1], best)
        if tr.step_in_iter > 0:
            tr.back_translate()
            for k, s in st["cd_streams"].items():
                tr.cd_streams[k].set_state(s)
        return tr


def _f(x):
    return "-" if x is None else f"{x:.2f}"


def metrics_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in METRIC_COLUMNS])
    return buf.getvalue()


def train_inner(trainer, steps=None):
    """Run ``steps`` paired updates (default: one outer iteration's worth) with M_prev fixed."""
    steps = trainer.steps_per_iter if steps is None else steps
    if trainer.bt is None and trainer.cfg.lambda_cd > 0:
        trainer.back_translate()
    for _ in range(steps):
        trainer.train_step()
    return trainer.params


def iterate(corpora, config, run_dir=None):
    """Full iterative training; returns ``(trainer, (m_src_tgt, m_tgt_src))``."""
    tr = Trainer(corpora, config, run_dir)
    if run_dir is not None:
        Path(run_dir).mkdir(parents=True, exist_ok=True)
        config.save(Path(run_dir) / "config.cfg")
    tr.run()
    return tr, tr.translators()


def train_supervised(corpora, pairs, config, steps, run_dir=None):
    """Same architecture trained with cross-entropy on parallel ``pairs`` (both directions).

    ``pairs`` maps language -> aligned lists of token lists.
    """
    cfg = config.resolved()
    tr = Trainer(corpora, config, run_dir)
    v = corpora.vocab
    ids = {l: [encode_text(v[l], s) for s in pairs[l]] for l in LANGS}
    rng = rngmod.stream(cfg.seed, "supervised")
    params = tr.params.values()
    n = len(ids["src"])
    for _ in range(steps):
        idx = rng.choice(n, size=min(cfg.train_batch_size, n), replace=False)
        loss = None
        for a in LANGS:
            b = OTHER[a]
            enc = encode(tr.params, pad_batch([ids[a][i] for i in idx], a), a)
            term = sequence_nll(tr.params, enc, b, [ids[b][i] for i in idx])
            loss = term if loss is None else loss + term
        ad.zero_grad(params)
        ad.backward(loss)
        grads, _ = clip_grad_norm([p.grad for p in params], cfg.optim_clip)
        adam_step(params, grads, tr.opt)
    return tr


def load_model(path):
    """Parameters, vocabularies and config stored in a checkpoint.

    Vocabularies are rebuilt from the training files named in the config
    snapshot, which is how they were built in the first place.
    """
    rec, cfg_text, _ = read_checkpoint(path)
    config = parse_config_text(cfg_text, where=str(path))
    cfg = config.resolved()
    vocab = {}
    for l in LANGS:
        p = getattr(cfg, f"data_{l}")
        if p is None:
            raise ContractError(f"{path}: config snapshot names no data.{l} file")
        vocab[l] = build_vocab(p, cfg.data_min_count, l)
    params = ModelParams(cfg.arch, {l: len(vocab[l]) for l in LANGS}, rngmod.stream(0, "unused"))
    params.load_state_dict({k[6:]: v for k, v in rec.items() if k.startswith("model/")})
    return params, vocab, config
