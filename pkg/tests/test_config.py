import pytest
from hypothesis import given, settings, strategies as st

from unmt.config import ExperimentConfig, key_of, load_config, parse_config_text
from unmt.errors import ContractError, FormatError


def test_paper_defaults():
    c = ExperimentConfig()
    assert (c.lambda_auto, c.lambda_cd, c.lambda_adv) == (1.0, 1.0, 1.0)
    assert (c.noise_p_wd, c.noise_k, c.adv_smoothing, c.adv_lr, c.optim_beta1) == (0.1, 3, 0.1, 5e-4, 0.5)
    assert c.train_batch_size == 32


def test_presets_resolve():
    p = ExperimentConfig(preset="paper").resolved()
    assert (p.model_emb_dim, p.model_hidden, p.model_layers, p.adv_hidden, p.optim_lr) == (300, 300, 3, 1024, 3e-4)
    d = ExperimentConfig().resolved()
    assert (d.model_emb_dim, d.model_layers, d.adv_hidden) == (64, 1, 128)
    assert ExperimentConfig(preset="paper", model_layers=2).resolved().model_layers == 2


def test_keys_are_dotted():
    assert key_of("lambda_cd") == "lambda.cd"
    assert key_of("noise_p_wd") == "noise.p_wd"
    assert key_of("seed") == "seed"


def test_parse_with_comments_and_types():
    c = parse_config_text("# hi\nlambda.cd = 0   # ablation\ninit.pretrained = false\nnoise.alpha = 2.5\n")
    assert c.lambda_cd == 0.0 and c.init_pretrained is False and c.noise_alpha == 2.5


def test_unknown_key_is_error():
    with pytest.raises(ContractError, match="lambda.cdd"):
        parse_config_text("lambda.cdd = 0\n")


def test_bad_line_and_value():
    with pytest.raises(FormatError, match=":2:"):
        parse_config_text("seed = 1\nnonsense\n", where="x.cfg")
    with pytest.raises(ContractError):
        parse_config_text("train.iterations = many\n")


def test_invariants():
    with pytest.raises(ContractError):
        ExperimentConfig(lambda_adv=-1)
    with pytest.raises(ContractError):
        ExperimentConfig(train_iterations=0)
    with pytest.raises(ContractError):
        ExperimentConfig(init_model="lexicon")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**63 - 1), st.floats(0, 5), st.booleans(), st.sampled_from(["wbw", "identity", "none"]),
       st.one_of(st.none(), st.floats(0, 10)))
def test_text_roundtrip(seed, lam, pre, init, alpha):
    c = ExperimentConfig(seed=seed, lambda_cd=lam, init_pretrained=pre, init_model=init, noise_alpha=alpha)
    assert parse_config_text(c.to_text()) == c


def test_relative_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "a.cfg").write_text("data.src = train.src\n")
    c = load_config(tmp_path / "sub" / "a.cfg")
    assert c.data_src == str((tmp_path / "sub" / "train.src").resolve())
