import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unmt.corpus import build_vocab, encode, load_corpus
from unmt.errors import ContractError
from unmt.evaluation import (
    bleu, model_selection_score, oracle_reorder, sentence_bleu, spearman, train_lm, word_reorder,
)
from unmt.synth import SynthSpec, generate
from unmt.translator import Lexicon, WordByWordModel

toks = st.lists(st.sampled_from("abcde"), min_size=1, max_size=12)


def B(c, r):
    return bleu([s.split() for s in c], [s.split() for s in r])


# hand-computed cases: (candidates, references, expected BLEU)
HAND = [
    # p = 1/4 (clipped), 1/4, 1/3, 1/2 after smoothing; BP = 1
    (["the the the the"], ["the cat"], 100 * (1 / 96) ** 0.25),
    # all precisions 1, c = 4 < r = 8: BP = exp(1 - 2)
    (["a b c d"], ["a b c d e f g h"], 100 * math.exp(-1)),
    # p = 4/5, 2/4, smoothed 1/4, smoothed 1/3
    (["a b c d e"], ["a b x d e"], 100 * (1 / 30) ** 0.25),
    # corpus statistics are pooled before dividing: p1 = 2/3, p2 = 1/1, p3 = p4 = 1 (0 of 0, smoothed)
    (["a b", "c"], ["a b", "d"], 100 * (2 / 3) ** 0.25),
    # clipping by reference counts; p = 1, 1/2, smoothed 1/2, smoothed 1/1
    (["a a b"], ["a b a"], 100 * 0.25 ** 0.25),
    # no unigram match at all
    (["x y"], ["a b"], 0.0),
]


@pytest.mark.parametrize("cand,ref,expected", HAND)
def test_hand_computed(cand, ref, expected):
    assert B(cand, ref).bleu == pytest.approx(expected, abs=1e-9)


def test_clipped_unigram_precision():
    rep = B(["the the the the"], ["the cat"])
    assert rep.precisions[0] == 0.25
    assert rep.brevity_penalty == 1.0


def test_identical_is_100():
    rep = B(["a b c", "d e f g"], ["a b c", "d e f g"])
    assert rep.bleu == 100.0 and rep.brevity_penalty == 1.0


def test_empty_candidate_sentence_scores_zero():
    rep = bleu([[]], [["a"]])
    assert rep.bleu == 0.0 and rep.cand_len == 0


def test_contract_errors():
    with pytest.raises(ContractError):
        bleu([], [])
    with pytest.raises(ContractError):
        bleu([["a"]], [["a"], ["b"]])


def test_report_documents_smoothing():
    rep = B(["a"], ["a"])
    assert "add-one" in rep.smoothing
    assert str(rep).startswith("BLEU = 100.00")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(toks, toks), min_size=1, max_size=6))
def test_bleu_range_and_bp(pairs):
    rep = bleu([c for c, _ in pairs], [r for _, r in pairs])
    assert 0.0 <= rep.bleu <= 100.0 + 1e-9
    assert 0.0 < rep.brevity_penalty <= 1.0


# -- model selection ----------------------------------------------------------
def _synth_models(reorder, lexicon=None):
    data = generate(SynthSpec(vocab_size=20, n_mono=50, n_valid=40, n_test=5, reorder=reorder, seed=3))
    vs = build_vocab(data.train_src + data.valid_src, lang="src")
    vt = build_vocab(data.train_tgt + data.valid_tgt, lang="tgt")
    lex = data.true_lexicon if lexicon is None else lexicon
    fwd, back = WordByWordModel(lex, vs, vt), WordByWordModel(lex.inverse(), vt, vs)
    val_s = [encode(vs, s) for s in data.valid_src]
    val_t = [encode(vt, s) for s in data.valid_tgt]
    return fwd, back, val_s, val_t


def test_ms_exact_inverses_is_100():
    ms, b1, b2 = model_selection_score(*_synth_models("none"))
    assert ms == pytest.approx(100.0) and b1 == b2 == pytest.approx(100.0)


def test_ms_identity_on_disjoint_vocabularies_near_zero():
    ms, _, _ = model_selection_score(*_synth_models("none", Lexicon()))
    assert ms < 1.0


def test_ms_is_average_of_round_trips():
    ms, b1, b2 = model_selection_score(*_synth_models("adjacent-swap"))
    assert ms == pytest.approx(0.5 * (b1 + b2))


# -- spearman -----------------------------------------------------------------
def test_spearman_examples():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert spearman([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)


def test_spearman_ties_use_average_ranks():
    # ranks x = 1, 2.5, 2.5, 4 against 1..4
    rx = np.array([1, 2.5, 2.5, 4]) - 2.5
    ry = np.arange(1, 5) - 2.5
    expect = rx @ ry / math.sqrt((rx @ rx) * (ry @ ry))
    assert spearman([1, 2, 2, 3], [1, 2, 3, 4]) == pytest.approx(expect)


def test_spearman_errors():
    with pytest.raises(ContractError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(ContractError):
        spearman([1], [1])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=3, max_size=20, unique=True))
def test_spearman_monotone_invariance(xs):
    ys = [x ** 3 + 1 for x in xs]
    assert spearman(xs, ys) == pytest.approx(1.0)


# -- reordering baselines ----------------------------------------------------
_LM = {}


def _lm():
    if not _LM:
        _LM["v"] = _train_lm()
    return _LM["v"]


@pytest.fixture
def lm_and_vocab():
    return _lm()


def _train_lm():
    lines = ["a b c d", "a b c", "b c d", "a b", "c d", "a b c d"] * 20
    v = build_vocab(lines, lang="tgt")
    lm = train_lm(load_corpus(lines, v), dim=16, hidden=16, epochs=4, lr=1e-2)
    return lm, v


def test_lm_prefers_training_order(lm_and_vocab):
    lm, v = lm_and_vocab
    good, bad = lm.log_prob([encode(v, "a b c d"), encode(v, "d c b a")])
    assert np.isfinite(good) and good > bad


def test_word_reorder_single_word(lm_and_vocab):
    lm, v = lm_and_vocab
    assert word_reorder([v.id_of("a")], lm) == [v.id_of("a")]


def test_word_reorder_keeps_optimal(lm_and_vocab):
    lm, v = lm_and_vocab
    s = list(encode(v, "a b c d"))
    assert word_reorder(s, lm) == s


@settings(max_examples=15, deadline=None)
@given(st.permutations(["a", "b", "c", "d"]), st.integers(0, 10))
def test_word_reorder_never_lowers_lm_score(perm, rounds):
    lm, v = _lm()
    s = [v.id_of(w) for w in perm]
    out = word_reorder(s, lm, rounds=rounds)
    assert sorted(out) == sorted(s)
    assert lm.log_prob([out])[0] >= lm.log_prob([s])[0]
    # each round applies one adjacent swap, so at most `rounds` inversions change
    inv = sum(1 for i in range(4) for j in range(i + 1, 4) if s.index(out[i]) > s.index(out[j]))
    assert inv <= rounds


def test_oracle_examples():
    assert oracle_reorder(["a", "b"], ["a", "b", "c"]) == ["a", "b"]
    assert oracle_reorder(["c", "a", "b"], ["a", "b", "c"]) == ["a", "b", "c"]


@settings(max_examples=60, deadline=None)
@given(toks, toks)
def test_oracle_at_least_input_order(cand, ref):
    out = oracle_reorder(cand, ref)
    assert sorted(out) == sorted(cand)
    assert sentence_bleu(out, ref) >= sentence_bleu(cand, ref) - 1e-12


@settings(max_examples=40, deadline=None)
@given(st.permutations(list("abcdefgh")))
def test_oracle_recovers_reference_from_its_multiset(perm):
    ref = list("abcdefgh")
    assert oracle_reorder(list(perm), ref) == ref
