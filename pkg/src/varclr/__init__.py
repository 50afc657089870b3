"""Contrastive pre-training of variable-name representations."""

__version__ = "0.1.0"

from .checkpoint import Checkpoint, export_embeddings, import_embeddings
from .contrastive import TrainConfig, info_nce, symmetric_loss, train
from .encoders import AvgEncoder, LstmEncoder, l2_normalize
from .evaluation import levenshtein, similarity_score, spearman
from .mining import RenamePair, extract_rename, mine_corpus, parse_unified_diff
from .retrieval import build_index, hit_at_k, make_typos, search
from .tokenizer import BpeVocab, canonicalize, encode_subwords, tokenize, train_bpe

__all__ = [
    "AvgEncoder", "BpeVocab", "Checkpoint", "LstmEncoder", "RenamePair", "TrainConfig",
    "build_index", "canonicalize", "encode_subwords", "export_embeddings", "extract_rename",
    "hit_at_k", "import_embeddings", "info_nce", "l2_normalize", "levenshtein", "make_typos",
    "mine_corpus", "parse_unified_diff", "search", "similarity_score", "spearman",
    "symmetric_loss", "tokenize", "train", "train_bpe",
]
