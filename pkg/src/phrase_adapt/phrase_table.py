"""Streaming reader/writer for Moses text phrase tables.

Entry format::

    src ||| tgt ||| s1 s2 ... [||| alignment [||| counts ...]]

Fields after the scores are carried through verbatim. Score tokens keep
their original spelling so an untouched table re-serializes byte-exact.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import FormatError
from .vocab import Phrase, Vocab, parse_phrase

logger = logging.getLogger(__name__)

SEP = " ||| "


@dataclass(frozen=True)
class PhrasePair:
    src: Phrase
    tgt: Phrase
    scores: tuple[float, ...]
    extra: tuple[str, ...] = ()
    # original score spelling; dropped whenever scores are replaced
    score_text: tuple[str, ...] | None = field(default=None, compare=False, repr=False)

    @property
    def key(self) -> tuple[Phrase, Phrase]:
        return (self.src, self.tgt)

    def with_scores(self, scores: Iterable[float]) -> "PhrasePair":
        return PhrasePair(self.src, self.tgt, tuple(scores), self.extra)


@dataclass
class TableStats:
    entries: int = 0
    max_src_len: int = 0
    max_tgt_len: int = 0
    distinct_src: int = 0
    malformed: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def format_score(x: float) -> str:
    """Shortest decimal that round-trips ``x``."""
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def split_fields(line: str) -> list[str]:
    return [f.strip() for f in line.rstrip("\r\n").split("|||")]


def parse_entry(vocab: Vocab, line: str, lineno: int | None = None) -> PhrasePair:
    fields = split_fields(line)
    if len(fields) < 3:
        raise FormatError(f"expected at least 3 fields, got {len(fields)}", lineno)
    src_txt, tgt_txt, score_txt = fields[0], fields[1], fields[2]
    if not src_txt or not tgt_txt:
        raise FormatError("empty source or target phrase", lineno)
    tokens = tuple(score_txt.split())
    if not tokens:
        raise FormatError("no scores", lineno)
    try:
        scores = tuple(float(t) for t in tokens)
    except ValueError:
        raise FormatError(f"non-numeric score in {score_txt!r}", lineno) from None
    for s in scores:
        if not (s > 0 and math.isfinite(s)):
            raise FormatError(f"score {s!r} is not a finite positive value", lineno)
    try:
        src = parse_phrase(vocab, src_txt)
        tgt = parse_phrase(vocab, tgt_txt)
    except FormatError as exc:
        raise FormatError(str(exc), lineno) from None
    return PhrasePair(src, tgt, scores, tuple(fields[3:]), tokens)


def serialize_entry(vocab: Vocab, pair: PhrasePair) -> str:
    if pair.score_text is not None and len(pair.score_text) == len(pair.scores):
        scores = " ".join(pair.score_text)
    else:
        scores = " ".join(format_score(s) for s in pair.scores)
    parts = [vocab.text(pair.src), vocab.text(pair.tgt), scores, *pair.extra]
    return SEP.join(parts)


def stream_table(
    source: Iterable[str],
    vocab: Vocab,
    strict: bool = True,
    stats: TableStats | None = None,
) -> Iterator[PhrasePair]:
    """Lazily parse entries from a line stream.

    In lenient mode malformed lines are logged, counted in ``stats`` and
    skipped; in strict mode the first one raises :class:`FormatError`.
    Blank lines are ignored.
    """
    offset = 0
    lineno = 0
    seen_src: set | None = set() if stats is not None else None
    try:
        for line in source:
            lineno += 1
            start = offset
            offset += len(line.encode("utf-8"))
            if not line.strip():
                continue
            try:
                pair = parse_entry(vocab, line, lineno)
            except FormatError as exc:
                if strict:
                    raise
                logger.warning("skipping malformed entry (byte %d): %s", start, exc)
                if stats is not None:
                    stats.malformed += 1
                continue
            if stats is not None:
                stats.entries += 1
                stats.max_src_len = max(stats.max_src_len, len(pair.src))
                stats.max_tgt_len = max(stats.max_tgt_len, len(pair.tgt))
                if pair.src not in seen_src:
                    seen_src.add(pair.src)
                    stats.distinct_src = len(seen_src)
            yield pair
    except OSError as exc:
        raise OSError(f"read failed near byte offset {offset}: {exc}") from exc


def table_stats(source: Iterable[str], vocab: Vocab, strict: bool = True) -> TableStats:
    stats = TableStats()
    for _ in stream_table(source, vocab, strict=strict, stats=stats):
        pass
    return stats


def write_table(sink, lines: Iterable[str]) -> int:
    n = 0
    for line in lines:
        sink.write(line)
        sink.write("\n")
        n += 1
    return n
