"""Sentence-pair similarity with range-routed specialized projectors."""

from .autodiff import Tape, Tensor, grad_check
from .data import BinScheme, Corpus, SentencePair, load_tsv, split, synth_corpus
from .head import HeadConfig, Objective, RouterInput, Selection, variant_config
from .model import SimilarityModel, build_model
from .optim import AdamW
from .training import TrainConfig, TrainMode, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "BinScheme",
    "Corpus",
    "HeadConfig",
    "Objective",
    "RouterInput",
    "Selection",
    "SentencePair",
    "SimilarityModel",
    "Tape",
    "Tensor",
    "TrainConfig",
    "TrainMode",
    "build_model",
    "grad_check",
    "load_checkpoint",
    "load_tsv",
    "save_checkpoint",
    "split",
    "synth_corpus",
    "train",
    "variant_config",
]
