"""Experiment configuration and its flat ``key = value`` text format.

Keys are dotted (``noise.p_wd``, ``lambda.cd``, ``adv.smoothing``); each maps
to the dataclass field with the first dot replaced by an underscore.
Unknown keys are errors so a typo in an ablation switch cannot pass
silently.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .adversary import DiscConfig
from .errors import ContractError, FormatError
from .noise import NoiseConfig
from .translator import ArchConfig

PRESETS = {
    "paper": dict(model_emb_dim=300, model_hidden=300, model_layers=3, adv_hidden=1024,
                  optim_lr=3e-4),
    "desk": dict(model_emb_dim=64, model_hidden=64, model_layers=1, adv_hidden=128,
                 optim_lr=2e-3),
}

INIT_MODELS = ("wbw", "identity", "none")


@dataclass
class ExperimentConfig:
    seed: int = 0
    preset: str = "desk"
    # architecture; None means "take it from the preset"
    model_emb_dim: int | None = None
    model_hidden: int | None = None
    model_layers: int | None = None
    adv_hidden: int | None = None
    adv_layers: int = 3
    adv_smoothing: float = 0.1
    adv_smooth_adv: bool = True
    adv_slope: float = 0.2
    adv_lr: float = 5e-4
    # loss weights
    lambda_auto: float = 1.0
    lambda_cd: float = 1.0
    lambda_adv: float = 1.0
    # corruption
    noise_p_wd: float = 0.1
    noise_k: int = 3
    noise_alpha: float | None = None
    # encoder/decoder optimiser
    optim_lr: float | None = None
    optim_beta1: float = 0.5
    optim_beta2: float = 0.999
    optim_clip: float = 5.0
    # schedule
    train_batch_size: int = 32
    train_epochs: float = 8.0
    train_iterations: int = 3
    train_eval_every: int = 0  # steps between evaluations; 0 means once per epoch
    train_select_best: bool = True
    train_bt_subsample: int = 0
    train_checkpoint_epochs: bool = True
    # bootstrap
    init_model: str = "wbw"
    init_pretrained: bool = True
    # data
    data_src: str | None = None
    data_tgt: str | None = None
    data_lexicon: str | None = None
    data_emb_src: str | None = None
    data_emb_tgt: str | None = None
    data_valid_src: str | None = None
    data_valid_tgt: str | None = None
    data_test_src: str | None = None
    data_test_tgt: str | None = None
    data_max_len: int = 50
    data_min_count: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.preset not in PRESETS:
            raise ContractError(f"unknown preset {self.preset!r}")
        for k in ("lambda_auto", "lambda_cd", "lambda_adv"):
            if getattr(self, k) < 0:
                raise ContractError(f"{key_of(k)} must be >= 0")
        if self.train_iterations < 1:
            raise ContractError("train.iterations must be >= 1")
        if self.train_epochs < 0 or self.train_eval_every < 0 or self.train_batch_size < 1:
            raise ContractError("train.epochs and train.eval_every must be >= 0, train.batch_size >= 1")
        if self.init_model not in INIT_MODELS:
            raise ContractError(f"init.model must be one of {INIT_MODELS}")
        if not 0 <= self.adv_smoothing < 0.5:
            raise ContractError("adv.smoothing must be in [0, 0.5)")
        NoiseConfig(self.noise_p_wd, self.noise_k, self.noise_alpha)

    def resolved(self):
        """Copy with preset defaults filled into every unset field."""
        vals = dataclasses.asdict(self)
        for k, v in PRESETS[self.preset].items():
            if vals[k] is None:
                vals[k] = v
        return ExperimentConfig(**vals)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def arch(self):
        r = self.resolved()
        return ArchConfig(r.model_emb_dim, r.model_hidden, r.model_layers)

    @property
    def noise(self):
        return NoiseConfig(self.noise_p_wd, self.noise_k, self.noise_alpha)

    @property
    def disc(self):
        r = self.resolved()
        return DiscConfig(r.adv_hidden, self.adv_layers, self.adv_smoothing, self.adv_slope, self.adv_smooth_adv)

    def to_text(self):
        return "".join(f"{key_of(f.name)} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))

    def save(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")


def key_of(field_name):
    return field_name.replace("_", ".", 1) if "_" in field_name else field_name


_FIELDS = {key_of(f.name): f for f in fields(ExperimentConfig)}


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _parse(raw, f, where):
    t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if raw.lower() == "none":
        if "None" in t:
            return None
        if t == "str":
            return raw
        raise ContractError(f"{where}: {key_of(f.name)} cannot be none")
    try:
        if t.startswith("bool"):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if t.startswith("int"):
            return int(raw)
        if t.startswith("float"):
            return float(raw)
    except ValueError:
        raise ContractError(f"{where}: bad value {raw!r} for {key_of(f.name)}") from None
    return raw


def parse_overrides(pairs, base=None, where="<overrides>"):
    vals = dataclasses.asdict(base or ExperimentConfig())
    for key, raw in pairs:
        if key not in _FIELDS:
            raise ContractError(f"{where}: unknown config key {key!r}")
        vals[_FIELDS[key].name] = _parse(raw, _FIELDS[key], where)
    return ExperimentConfig(**vals)


def parse_config_text(text, base=None, where="<config>"):
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("expected 'key = value'", where, lineno)
        k, v = (s.strip() for s in line.split("=", 1))
        pairs.append((k, v))
    return parse_overrides(pairs, base, where)


def load_config(path, base=None):
    """Read a config file; relative data paths are resolved against its directory."""
    path = Path(path)
    cfg = parse_config_text(path.read_text(encoding="utf-8"), base, str(path))
    changes = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name.startswith("data_") and isinstance(v, str) and not Path(v).is_absolute():
            changes[f.name] = str((path.parent / v).resolve())
    return cfg.replace(**changes) if changes else cfg
