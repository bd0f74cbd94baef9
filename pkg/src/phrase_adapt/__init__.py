"""Connecting-phrase domain adaptation for phrase-based MT assets."""

from .vocab import Vocab, parse_phrase
from .phrase_table import PhrasePair, parse_entry, serialize_entry, stream_table
from .ngram_lm import NgramLm, parse_arpa, serialize_arpa, insert_ngrams, renormalize, train_addk_lm
from .connecting import AffixIndex, ConnectCase, build_affix_index, is_connecting, classify_pair
from .op_scoring import occurring_probability, pair_op_score, rank_candidates

__version__ = "0.1.0"

__all__ = [
    "Vocab", "parse_phrase",
    "PhrasePair", "parse_entry", "serialize_entry", "stream_table",
    "NgramLm", "parse_arpa", "serialize_arpa", "insert_ngrams", "renormalize", "train_addk_lm",
    "AffixIndex", "ConnectCase", "build_affix_index", "is_connecting", "classify_pair",
    "occurring_probability", "pair_op_score", "rank_candidates",
]
