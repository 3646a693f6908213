"""
Word-by-word, LM reordering and oracle reordering
=================================================

Three reference points that keep the lexicon fixed and only move words
around.  The oracle sees the reference, so it bounds any model that never
replaces a word.
"""

from unmt import ExperimentConfig, SynthSpec, bleu, corpora_from_synth, generate
from unmt.evaluation import oracle_reorder, train_lm, word_reorder

data = generate(SynthSpec(vocab_size=40, n_mono=1500, n_valid=200, n_test=200, max_len=8))
corp = corpora_from_synth(data, ExperimentConfig())
lm = train_lm(corp.train["tgt"], seed=1)
vt = corp.vocab["tgt"]
refs = corp.test["tgt"]

# %%
wbw = [[corp.lexicon.get(w, w) for w in s] for s in corp.test["src"]]
wr = [[vt.word_of(i) for i in word_reorder([vt.id_of(w) for w in s], lm)] for s in wbw]
owr = [oracle_reorder(s, r) for s, r in zip(wbw, refs)]
for name, hyp in (("WBW", wbw), ("WR", wr), ("OWR", owr)):
    print(name, bleu(hyp, refs))

# %%
# With a bijective lexicon the word multiset of each WBW output equals the
# reference's, so the oracle reaches 100.  The LM recovers part of the order.
