"""Unsupervised neural machine translation from monolingual corpora, on numpy."""
import os

# a single BLAS thread keeps reductions in a fixed order, so runs are bitwise
# reproducible; it only takes effect if numpy has not been imported yet
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

from .config import ExperimentConfig, load_config  # noqa: E402
from .errors import ContractError, DimensionError, FormatError, NumericError  # noqa: E402
from .evaluation import bleu, model_selection_score, spearman  # noqa: E402
from .noise import NoiseConfig, corrupt  # noqa: E402
from .synth import SynthSpec, generate  # noqa: E402
from .training import Trainer, corpora_from_synth, iterate, load_corpora  # noqa: E402
from .translator import ArchConfig, Lexicon, ModelParams, TranslationModel, translate, wbw_translate  # noqa: E402

__version__ = "0.1.0"
