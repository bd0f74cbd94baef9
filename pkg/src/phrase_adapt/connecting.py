"""Affix indexes over in-domain phrases and connecting-phrase detection.

A phrase ``w1..wi`` is connecting when, for some split ``1 <= k <= i-1``,
``w1..wk`` ends some in-domain phrase and ``w(k+1)..wi`` starts some
in-domain phrase. The affix may be the whole in-domain phrase.
"""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Container, Iterable, Iterator, Sequence

from .ngram_lm import NgramLm
from .phrase_table import PhrasePair
from .vocab import Phrase

DEFAULT_MAX_AFFIX = 7
DEFAULT_OCCURRENCE_CAP = 1000


class ConnectCase(enum.Enum):
    BOTH = "a"
    EITHER = "b"
    SOURCE_ONLY = "c"
    TARGET_ONLY = "d"
    NONE = "none"


def parse_case_policy(spec: str) -> frozenset[ConnectCase]:
    """Turn ``"a"``, ``"b"`` or a comma list like ``"a,c"`` into accepted labels.

    ``b`` (either side connecting) expands to the three non-empty labels,
    because :func:`classify_pair` reports the strongest single label.
    """
    accepted: set[ConnectCase] = set()
    for part in spec.replace(" ", "").split(","):
        if part == "a":
            accepted.add(ConnectCase.BOTH)
        elif part == "b":
            accepted.update((ConnectCase.BOTH, ConnectCase.SOURCE_ONLY, ConnectCase.TARGET_ONLY))
        elif part == "c":
            accepted.add(ConnectCase.SOURCE_ONLY)
        elif part == "d":
            accepted.add(ConnectCase.TARGET_ONLY)
        else:
            raise ValueError(f"unknown case label {part!r} (expected a, b, c or d)")
    return frozenset(accepted)


DEFAULT_POLICY = frozenset({ConnectCase.BOTH})


@dataclass
class AffixIndex:
    """Prefix and suffix occurrence maps for one side of a phrase table.

    ``prefixes[a]`` lists in-domain phrases beginning with ``a``;
    ``suffixes[a]`` lists those ending with ``a``. Lists are sorted,
    deduplicated and capped at ``cap`` entries.
    """

    max_affix_len: int = DEFAULT_MAX_AFFIX
    cap: int = DEFAULT_OCCURRENCE_CAP
    prefixes: dict[Phrase, list[Phrase]] = field(default_factory=dict)
    suffixes: dict[Phrase, list[Phrase]] = field(default_factory=dict)
    n_phrases: int = 0
    overflow: int = 0

    def stats(self) -> dict:
        return {
            "phrases": self.n_phrases,
            "prefixes": len(self.prefixes),
            "suffixes": len(self.suffixes),
            "max_affix_len": self.max_affix_len,
            "occurrence_cap": self.cap,
            "capped_affixes": self.overflow,
        }


def build_affix_index(
    phrases: Iterable[Phrase],
    max_affix_len: int = DEFAULT_MAX_AFFIX,
    cap: int = DEFAULT_OCCURRENCE_CAP,
    key=None,
) -> AffixIndex:
    """Index every prefix and suffix up to ``max_affix_len`` tokens.

    ``key`` orders the occurrence lists (and so decides which survive the
    cap); pass a token-string key to stay independent of id assignment.
    """
    if max_affix_len < 1:
        raise ValueError("max_affix_len must be >= 1")
    pre: dict[Phrase, set] = defaultdict(set)
    suf: dict[Phrase, set] = defaultdict(set)
    distinct = set(tuple(p) for p in phrases)
    for p in distinct:
        n = len(p)
        for k in range(1, min(n, max_affix_len) + 1):
            pre[p[:k]].add(p)
            suf[p[n - k:]].add(p)
    index = AffixIndex(max_affix_len=max_affix_len, cap=cap, n_phrases=len(distinct))
    for src, dst in ((pre, index.prefixes), (suf, index.suffixes)):
        for affix, occ in src.items():
            ordered = sorted(occ, key=key)
            if len(ordered) > cap:
                index.overflow += 1
                ordered = ordered[:cap]
            dst[affix] = ordered
    return index


def is_connecting(index: AffixIndex, phrase: Sequence[int]) -> list[int]:
    """Split witnesses ``k`` (1-based left length) where the phrase connects."""
    phrase = tuple(phrase)
    suffixes = index.suffixes
    prefixes = index.prefixes
    return [
        k for k in range(1, len(phrase))
        if phrase[:k] in suffixes and phrase[k:] in prefixes
    ]


def connects(index: AffixIndex, phrase: Phrase) -> bool:
    suffixes = index.suffixes
    prefixes = index.prefixes
    for k in range(1, len(phrase)):
        if phrase[:k] in suffixes and phrase[k:] in prefixes:
            return True
    return False


def brute_force_is_connecting(phrases: Sequence[Sequence[int]], phrase: Sequence[int]) -> list[int]:
    """Reference check by exhaustive scan of the in-domain phrase list."""
    phrase = tuple(phrase)
    pool = phrases if all(type(p) is tuple for p in phrases) else [tuple(p) for p in phrases]
    witness = []
    for k in range(1, len(phrase)):
        left, right = phrase[:k], phrase[k:]
        m = len(right)
        # slices of shorter phrases are shorter than the affix, so never equal
        if any(p[-k:] == left for p in pool) and any(p[:m] == right for p in pool):
            witness.append(k)
    return witness


def classify_pair(src_index: AffixIndex, tgt_index: AffixIndex, pair: PhrasePair) -> ConnectCase:
    s = connects(src_index, pair.src)
    t = connects(tgt_index, pair.tgt)
    if s and t:
        return ConnectCase.BOTH
    if s:
        return ConnectCase.SOURCE_ONLY
    if t:
        return ConnectCase.TARGET_ONLY
    return ConnectCase.NONE


@dataclass
class ExtractCounts:
    seen: int = 0
    connecting: int = 0
    accepted: int = 0
    duplicates: int = 0


def extract_bilingual_candidates(
    out_pt: Iterable[PhrasePair],
    src_index: AffixIndex,
    tgt_index: AffixIndex,
    policy: Container[ConnectCase] = DEFAULT_POLICY,
    in_domain_keys: Container = frozenset(),
    counts: ExtractCounts | None = None,
) -> Iterator[tuple[ConnectCase, PhrasePair]]:
    """Yield ``(case, pair)`` for out-of-domain pairs accepted by ``policy``.

    Pairs whose exact (src, tgt) already exists in-domain are dropped.
    """
    counts = counts if counts is not None else ExtractCounts()
    for pair in out_pt:
        counts.seen += 1
        case = classify_pair(src_index, tgt_index, pair)
        if case is ConnectCase.NONE:
            continue
        counts.connecting += 1
        if case not in policy:
            continue
        if (pair.src, pair.tgt) in in_domain_keys:
            counts.duplicates += 1
            continue
        counts.accepted += 1
        yield case, pair


def extract_monolingual_candidates(
    out_lm: NgramLm,
    tgt_index: AffixIndex,
    max_order: int | None = None,
    in_lm: NgramLm | None = None,
) -> list[tuple[Phrase, float]]:
    """Connecting n-grams (orders 2..max_order) of the out-of-domain LM.

    Each comes with its stored conditional log10 probability. N-grams
    explicit in ``in_lm`` are skipped. Output is sorted by token strings.
    """
    top = out_lm.order if max_order is None else min(max_order, out_lm.order)
    found = []
    for ng, lp in out_lm.probs.items():
        if not 2 <= len(ng) <= top or not out_lm.is_explicit(ng):
            continue
        if in_lm is not None and in_lm.is_explicit(ng):
            continue
        if connects(tgt_index, ng):
            found.append((ng, lp))
    words = out_lm.vocab.words
    found.sort(key=lambda item: words(item[0]))
    return found
