"""
Unsupervised translation on a synthetic language pair
=====================================================

Two toy languages share a grammar but not a vocabulary: every source word
``s###`` has exactly one target word ``t###`` and neighbouring words swap
places.  The model never sees a parallel sentence during training; it only
gets the two monolingual halves, a seed lexicon and aligned embeddings.

Run with ``python3 notebooks/01_synthetic_walkthrough.py``.  The sizes below
finish in a couple of minutes; the acceptance run uses ``SynthSpec()``.
"""

import numpy as np

from unmt import ExperimentConfig, SynthSpec, corpora_from_synth, generate, iterate
from unmt.translator import WordByWordModel

# %%
# A small pair: 40 words per side, 1500 monolingual sentences each.
spec = SynthSpec(vocab_size=40, n_mono=1500, n_valid=200, n_test=200, max_len=8)
data = generate(spec)
print(data.train_src[0])
print(data.train_tgt[0])   # a different sentence, in the other language

# %%
# The bootstrap model translates word by word.  Adjacent swaps break every
# bigram, so its BLEU is close to zero even with a perfect lexicon.
cfg = ExperimentConfig(train_iterations=2, train_epochs=4)
corpora = corpora_from_synth(data, cfg)
wbw = (WordByWordModel(corpora.lexicon, corpora.vocab["src"], corpora.vocab["tgt"]),
       WordByWordModel(corpora.lexicon.inverse(), corpora.vocab["tgt"], corpora.vocab["src"]))

# %%
# Each outer iteration back-translates both corpora with the previous model
# and then trains denoising, cross-domain and adversarial terms together.
trainer, (m_st, m_ts) = iterate(corpora, cfg)
print("word-by-word  ", trainer.test_bleu(*wbw))
for s in trainer.summary:
    print(f"iteration {s['iter']}: MS {s['ms_score']:.1f}  "
          f"test BLEU {s['bleu_src_tgt']:.1f} / {s['bleu_tgt_src']:.1f}")

# %%
# A few translations next to the references.
v = corpora.vocab
for src, ref in list(zip(corpora.test["src"], corpora.test["tgt"]))[:5]:
    hyp = m_st.translate([np.array([v["src"].id_of(w) for w in src])])[0]
    print(" ".join(src), "->", " ".join(v["tgt"].word_of(i) for i in hyp), "| ref:", " ".join(ref))

# %%
# Model selection uses no parallel data: the round-trip BLEU on monolingual
# validation text tracks the true test BLEU over the checkpoints.
from unmt import spearman  # noqa: E402

rows = trainer.history
print("Spearman(MS, test BLEU) =",
      round(spearman([r["ms_score"] for r in rows],
                     [(r["bleu_src_tgt"] + r["bleu_tgt_src"]) / 2 for r in rows]), 3))
