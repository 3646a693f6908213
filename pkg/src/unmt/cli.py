"""Command-line front end: ``unmt {synth,train,translate,evaluate,ablate}``.

Every command that produces a run writes into ``<out>/<run id>/`` where the
run id is a hash of the resolved config text.  An existing run directory is
never reused unless ``--force`` is given.  Failures print one JSON line to
stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import ExperimentConfig, load_config, parse_overrides
from .corpus import LANGS, decode, encode as encode_text
from .errors import ContractError, FormatError, NumericError
from .evaluation import bleu, model_selection_score
from .synth import SynthSpec, generate
from .training import iterate, load_corpora, load_model, metrics_csv
from .translator import TranslationModel

log = logging.getLogger("unmt")

# each row: name, overrides applied to the base config
ABLATIONS = [
    ("full", {}),
    ("lambda_cd=0", {"lambda_cd": 0.0}),
    ("no-pretraining", {"init_pretrained": False}),
    ("lambda_cd=0+no-pretraining", {"lambda_cd": 0.0, "init_pretrained": False, "init_model": "none"}),
    ("C(x)=x", {"noise_p_wd": 0.0, "noise_k": 0, "noise_alpha": None}),
    ("lambda_auto=0", {"lambda_auto": 0.0}),
    ("lambda_adv=0", {"lambda_adv": 0.0}),
]


class CliError(Exception):
    pass


def run_id(config):
    return hashlib.sha256(config.to_text().encode("utf-8")).hexdigest()[:12]


def prepare_run_dir(out, config, force=False, name=None):
    rid = run_id(config)
    d = Path(out) / (f"{name}-{rid}" if name else rid)
    if d.exists():
        if not force:
            raise CliError(f"run directory {d} exists (use --force to overwrite)")
        shutil.rmtree(d)
    d.mkdir(parents=True)
    return d, rid


def write_manifest(run_dir, rid, config, trainer=None):
    ckpts = sorted(str(p.relative_to(run_dir)) for p in (run_dir / "checkpoints").glob("*.ckpt")) \
        if (run_dir / "checkpoints").exists() else []
    man = {
        "run_id": rid,
        "run_dir": str(run_dir),
        "config": "config.cfg",
        "seed": config.seed,
        "checkpoints": ckpts,
        "metrics": "metrics.csv",
        "summary": trainer.summary if trainer else [],
    }
    (run_dir / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return man


def _base_config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    pairs = [tuple(s.strip() for s in kv.split("=", 1)) for kv in (getattr(args, "set", None) or [])]
    for p in pairs:
        if len(p) != 2:
            raise ContractError(f"--set expects key=value, got {p[0]!r}")
    cfg = parse_overrides(pairs, cfg, "--set")
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "preset", None):
        changes["preset"] = args.preset
    return cfg.replace(**changes) if changes else cfg


def train_run(config, out, force=False, name=None):
    run_dir, rid = prepare_run_dir(out, config, force, name)
    corpora = load_corpora(config)
    trainer, _ = iterate(corpora, config, run_dir)
    write_manifest(run_dir, rid, config, trainer)
    return run_dir, trainer


# -- commands -----------------------------------------------------------------
def cmd_synth(args):
    fields = {f.name for f in dataclasses.fields(SynthSpec)}
    kw = {k: v for k, v in vars(args).items() if k in fields and v is not None}
    if args.seed is not None:
        kw["seed"] = args.seed
    spec = SynthSpec(**kw)
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise CliError(f"{out} is not empty (use --force to overwrite)")
    generate(spec, out)
    cfg = ExperimentConfig(
        seed=spec.seed, data_src="train.src", data_tgt="train.tgt", data_lexicon="lexicon.src-tgt.tsv",
        data_emb_src="emb.src.txt", data_emb_tgt="emb.tgt.txt",
        data_valid_src="valid.src", data_valid_tgt="valid.tgt",
        data_test_src="test.src", data_test_tgt="test.tgt",
    )
    if spec.emb_dim != 64:
        cfg = cfg.replace(model_emb_dim=spec.emb_dim)
    cfg.save(out / "train.cfg")
    print(out)


def cmd_train(args):
    cfg = _base_config(args)
    run_dir, tr = train_run(cfg, args.out, args.force)
    for s in tr.summary:
        print(json.dumps(s, sort_keys=True))
    print(run_dir)


def cmd_translate(args):
    params, vocab, _ = load_model(args.checkpoint)
    a, b = _direction(args.direction)
    model = TranslationModel(params, a, b)
    lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    idx = [i for i, l in enumerate(lines) if l.strip()]
    hyp = model.translate([encode_text(vocab[a], lines[i]) for i in idx])
    out = [""] * len(lines)
    for i, y in zip(idx, hyp):
        out[i] = decode(vocab[b], y)
    text = "".join(l + "\n" for l in out)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _direction(s):
    parts = s.split("-")
    if len(parts) != 2 or parts[0] not in LANGS or parts[1] not in LANGS or parts[0] == parts[1]:
        raise ContractError(f"direction must be src-tgt or tgt-src, got {s!r}")
    return parts


def _lines(path):
    return Path(path).read_text(encoding="utf-8").splitlines()


def cmd_evaluate(args):
    out = {}
    if args.candidates:
        if not args.references:
            raise ContractError("--candidates needs --references")
        rep = bleu([l.split() for l in _lines(args.candidates)], [l.split() for l in _lines(args.references)])
        out["bleu"] = rep.bleu
        print(rep)
    if args.checkpoint:
        params, vocab, cfg = load_model(args.checkpoint)
        m = {l: TranslationModel(params, l, "tgt" if l == "src" else "src") for l in LANGS}
        cfg = cfg.resolved()
        if cfg.data_valid_src and cfg.data_valid_tgt:
            val = {l: [encode_text(vocab[l], s) for s in _lines(getattr(cfg, f"data_valid_{l}")) if s.strip()]
                   for l in LANGS}
            out["ms_score"], _, _ = model_selection_score(m["src"], m["tgt"], val["src"], val["tgt"])
            print(f"MS = {out['ms_score']:.2f}")
        ts = args.test_src or cfg.data_test_src
        tt = args.test_tgt or cfg.data_test_tgt
        if ts and tt:
            pairs = [(x.split(), y.split()) for x, y in zip(_lines(ts), _lines(tt)) if x.strip() and y.strip()]
            for a, b, ia, ib in (("src", "tgt", 0, 1), ("tgt", "src", 1, 0)):
                hyp = m[a].translate([encode_text(vocab[a], p[ia]) for p in pairs])
                rep = bleu([decode(vocab[b], y).split() for y in hyp], [p[ib] for p in pairs])
                out[f"bleu_{a}_{b}"] = rep.bleu
                print(f"{a}->{b}: {rep}")
    if not out:
        raise ContractError("nothing to evaluate: give --checkpoint or --candidates/--references")
    if args.out:
        _append_metrics(Path(args.out) / "metrics.csv", out)
    print(json.dumps(out, sort_keys=True))


def _append_metrics(path, values):
    """Append one row; columns this command does not produce stay blank."""
    row = {"bleu_src_tgt": values.get("bleu_src_tgt", values.get("bleu")), **values}
    text = metrics_csv([row])
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists() and path.stat().st_size:
        text = text.split("\n", 1)[1]
    with open(path, "a", encoding="utf-8") as f:
        f.write(text)


def ablation_configs(base):
    return [(name, base.replace(**ov)) for name, ov in ABLATIONS]


def cmd_ablate(args):
    base = _base_config(args)
    out = Path(args.out)
    runs = ablation_configs(base)
    workers = max(1, min(args.parallel, _thread_cap()))

    def one(item):
        name, cfg = item
        run_dir, tr = train_run(cfg, out, args.force, name.replace("=", "").replace("+", "_").replace("(", "").replace(")", ""))
        return name, run_dir, tr.summary

    if workers == 1:
        results = [one(r) for r in runs]
    else:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(one, runs))
    rows = ["run,run_dir,ms_score,bleu_src_tgt,bleu_tgt_src"]
    for name, run_dir, summary in results:
        last = summary[-1]
        rows.append(f"{name},{run_dir.name},{_c(last['ms_score'])},{_c(last['bleu_src_tgt'])},{_c(last['bleu_tgt_src'])}")
    table = "\n".join(rows) + "\n"
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.csv").write_text(table, encoding="utf-8")
    sys.stdout.write(table)


def _c(x):
    return "" if x is None else f"{x:.2f}"


def _thread_cap():
    v = os.environ.get("UNMT_THREADS")
    if not v:
        return os.cpu_count() or 1
    try:
        n = int(v)
    except ValueError:
        raise ContractError(f"UNMT_THREADS must be an integer, got {v!r}") from None
    return max(1, n)


# -- parser -------------------------------------------------------------------
def build_parser():
    p = argparse.ArgumentParser(prog="unmt", description="Unsupervised translation from monolingual corpora.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def shared(sp, out_required=True):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required)
        sp.add_argument("--preset", choices=["paper", "desk"])
        sp.add_argument("--force", action="store_true")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    s = sub.add_parser("synth", help="generate a synthetic language pair")
    shared(s)
    for f in dataclasses.fields(SynthSpec):
        if f.name == "seed":
            continue
        s.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=type(f.default))
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="run iterative unsupervised training")
    shared(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("translate", help="translate a file with a checkpoint")
    shared(s, out_required=False)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--direction", default="src-tgt")
    s.set_defaults(func=cmd_translate)

    s = sub.add_parser("evaluate", help="BLEU and model-selection score")
    shared(s, out_required=False)
    s.add_argument("--checkpoint")
    s.add_argument("--test-src")
    s.add_argument("--test-tgt")
    s.add_argument("--candidates")
    s.add_argument("--references")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("ablate", help="full run plus the six ablation rows")
    shared(s)
    s.add_argument("--parallel", type=int, default=1)
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None):
    # one BLAS thread keeps floating-point reductions in a fixed order
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (CliError, ContractError, FormatError, NumericError, OSError) as e:
        err = {"error": type(e).__name__, "command": args.command, "message": str(e)}
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return 1
    return 0


__all__ = ["main", "build_parser", "ABLATIONS", "ablation_configs", "metrics_csv"]
