"""Occurring-probability scores for connecting candidates.

For a phrase split at ``k``, the left part must end some in-domain phrases
and the right part must start some. The score of the split is

    (sum of P(x) over in-domain x ending with the left part)
  * (sum of P(y) over in-domain y starting with the right part)

and the phrase score adds this over every split. ``P`` is the in-domain LM
probability of the whole in-domain phrase.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .connecting import AffixIndex
from .errors import InputError
from .ngram_lm import NgramLm
from .parallel import chunked_map
from .phrase_table import PhrasePair
from .vocab import Phrase

TERM_FLOOR = 1e-300


@dataclass
class OpScore:
    value: float
    # (k, left-part sum, right-part sum) per split
    splits: list[tuple[int, float, float]] = field(default_factory=list)


@dataclass
class RankedCandidate:
    candidate: object
    score: float
    rank: int


def affix_occurrence_sum(lm: NgramLm, occurrences: Iterable[Sequence[int]]) -> float:
    return math.fsum(
        max(10.0 ** lm.sequence_logprob(p), TERM_FLOOR) for p in occurrences
    )


class OpScorer:
    """Occurring-probability scorer for one side, caching affix sums."""

    def __init__(self, index: AffixIndex, lm: NgramLm) -> None:
        self.index = index
        self.lm = lm
        self._phrase_prob: dict[Phrase, float] = {}
        self._prefix_sum: dict[Phrase, float] = {}
        self._suffix_sum: dict[Phrase, float] = {}

    def _prob(self, p: Phrase) -> float:
        v = self._phrase_prob.get(p)
        if v is None:
            v = max(10.0 ** self.lm.sequence_logprob(p), TERM_FLOOR)
            self._phrase_prob[p] = v
        return v

    def _affix_sum(self, affix: Phrase, occ_map: dict, cache: dict) -> float:
        v = cache.get(affix)
        if v is None:
            occ = occ_map.get(affix, ())
            v = math.fsum(self._prob(p) for p in occ)
            cache[affix] = v
        return v

    def score(self, phrase: Sequence[int]) -> OpScore:
        phrase = tuple(phrase)
        if len(phrase) < 2:
            raise InputError("occurring probability needs at least two words")
        splits = []
        for k in range(1, len(phrase)):
            left = self._affix_sum(phrase[:k], self.index.suffixes, self._suffix_sum)
            if left == 0.0:
                continue
            right = self._affix_sum(phrase[k:], self.index.prefixes, self._prefix_sum)
            if right == 0.0:
                continue
            splits.append((k, left, right))
        return OpScore(math.fsum(l * r for _, l, r in splits), splits)

    def value(self, phrase: Sequence[int]) -> float:
        """Score with the length-1 convention: a single word scores 0."""
        if len(phrase) < 2:
            return 0.0
        return self.score(phrase).value


def occurring_probability(phrase: Sequence[int], index: AffixIndex, lm: NgramLm) -> OpScore:
    return OpScorer(index, lm).score(phrase)


def pair_op_score(
    pair: PhrasePair,
    src_index: AffixIndex | OpScorer,
    tgt_index: AffixIndex | OpScorer,
    src_lm: NgramLm | None = None,
    tgt_lm: NgramLm | None = None,
) -> float:
    """Source score times target score; 0 when either side is a single word.

    Accepts prebuilt :class:`OpScorer` objects in place of index/LM pairs.
    """
    src = src_index if isinstance(src_index, OpScorer) else OpScorer(src_index, src_lm)
    tgt = tgt_index if isinstance(tgt_index, OpScorer) else OpScorer(tgt_index, tgt_lm)
    fs = src.value(pair.src)
    if fs == 0.0:
        return 0.0
    return fs * tgt.value(pair.tgt)


def rank_candidates(
    candidates: Iterable,
    scorer: Callable[[object], float],
    top_k: int | None = None,
    min_score: float | None = None,
    sort_text: Callable[[object], tuple] = lambda c: (),
    threads: int = 1,
) -> list[RankedCandidate]:
    """Score, sort by (score desc, text asc) and truncate.

    With both ``top_k`` and ``min_score`` unset every candidate is kept.
    """
    if top_k is not None and min_score is not None:
        raise InputError("use top_k or min_score, not both")
    if top_k is not None and top_k < 0:
        raise InputError("top_k must be >= 0")
    if min_score is not None and not math.isfinite(min_score):
        raise InputError("min_score must be finite")
    items = list(candidates)
    scores = chunked_map(scorer, items, threads)
    order = sorted(range(len(items)), key=lambda i: (-scores[i], sort_text(items[i]), i))
    if min_score is not None:
        order = [i for i in order if scores[i] >= min_score]
    if top_k is not None:
        order = order[:top_k]
    return [RankedCandidate(items[i], scores[i], r) for r, i in enumerate(order, 1)]
