import numpy as np
import pytest
from collections import Counter
from hypothesis import given, settings, strategies as st

from unmt.errors import ContractError
from unmt.noise import NoiseConfig, corrupt, drop_words, sample_permutation


def test_alpha_below_one_is_identity():
    rng = np.random.default_rng(0)
    for n in range(0, 30):
        assert sample_permutation(n, 0.5, rng).tolist() == list(range(n))


def test_small_n_identity():
    rng = np.random.default_rng(0)
    assert sample_permutation(0, 4, rng).tolist() == []
    assert sample_permutation(1, 4, rng).tolist() == [0]


def test_defaults():
    c = NoiseConfig()
    assert (c.p_wd, c.k, c.temperature) == (0.1, 3, 4)
    assert NoiseConfig(alpha=2.5).temperature == 2.5


def test_config_validation():
    for kw in ({"p_wd": 1.0}, {"p_wd": -0.1}, {"k": -1}, {"alpha": -1.0}):
        with pytest.raises(ContractError):
            NoiseConfig(**kw)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 60), st.integers(0, 6), st.integers(0, 2**32 - 1))
def test_displacement_bound(n, k, seed):
    s = sample_permutation(n, k + 1, np.random.default_rng(seed))
    assert sorted(s.tolist()) == list(range(n))
    assert np.all(np.abs(s - np.arange(n)) <= k)


def test_p_zero_unchanged():
    assert drop_words([5, 6, 7], 0.0, np.random.default_rng(0)) == [5, 6, 7]


def test_single_token_never_emptied():
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert drop_words([9], 0.99, rng) == [9]


def test_no_noise_is_identity():
    rng = np.random.default_rng(1)
    cfg = NoiseConfig(0.0, 0)
    for n in range(1, 20):
        toks = list(range(10, 10 + n))
        assert corrupt(toks, cfg, rng) == toks


def test_corrupt_seeded_reproducible():
    toks = list(range(20))
    a = corrupt(toks, NoiseConfig(), np.random.default_rng(3))
    b = corrupt(toks, NoiseConfig(), np.random.default_rng(3))
    assert a == b


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(4, 30), min_size=1, max_size=25), st.integers(0, 2**32 - 1))
def test_corrupt_is_sub_multiset_and_nonempty(toks, seed):
    out = corrupt(toks, NoiseConfig(0.3, 3), np.random.default_rng(seed))
    assert out
    assert not Counter(out) - Counter(toks)
