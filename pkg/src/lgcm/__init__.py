"""Local-global hierarchical transformer for multi-turn response generation."""

from .config import LGCMConfig, Variant
from .data import Vocabulary, build_vocab, collate, load_jsonl, make_dataset, make_examples, tokenize
from .decoder import GenerationConfig, greedy_generate
from .flops import count_flops
from .model import LGCM, build_variant
from .tensor import Tensor, backward, no_grad

__version__ = "0.1.0"

__all__ = [
    "LGCM",
    "LGCMConfig",
    "Variant",
    "Vocabulary",
    "Tensor",
    "GenerationConfig",
    "backward",
    "build_variant",
    "build_vocab",
    "collate",
    "count_flops",
    "greedy_generate",
    "load_jsonl",
    "make_dataset",
    "make_examples",
    "no_grad",
    "tokenize",
]
