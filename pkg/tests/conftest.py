import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from unmt import autodiff as ad  # noqa: E402
from unmt.corpus import Vocabulary, load_corpus  # noqa: E402
from unmt.translator import ArchConfig, ModelParams  # noqa: E402


@pytest.fixture
def tiny_vocabs():
    return {
        "src": Vocabulary("src", [f"s{i}" for i in range(8)]),
        "tgt": Vocabulary("tgt", [f"t{i}" for i in range(9)]),
    }


@pytest.fixture
def tiny_params(tiny_vocabs):
    arch = ArchConfig(emb_dim=5, hidden=4, layers=1)
    sizes = {l: len(v) for l, v in tiny_vocabs.items()}
    return ModelParams(arch, sizes, np.random.default_rng(0))


@pytest.fixture
def tiny_datasets(tiny_vocabs):
    src = ["s0 s1 s2", "s3 s4", "s5 s6 s7 s0", "s1"]
    tgt = ["t0 t1", "t2 t3 t4", "t5 t6 t7 t8", "t1 t2"]
    return {"src": load_corpus(src, tiny_vocabs["src"]), "tgt": load_corpus(tgt, tiny_vocabs["tgt"])}


@pytest.fixture
def f64():
    with ad.precision(np.float64):
        yield
