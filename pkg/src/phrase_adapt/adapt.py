"""Merging selected out-of-domain material into in-domain assets."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .errors import InputError
from .ngram_lm import NgramLm, insert_ngrams, renormalize
from .nn_scoring import NnModel, q_score, q_score_lm
from .phrase_table import SEP, PhrasePair, parse_entry, serialize_entry, split_fields
from .vocab import Phrase, Vocab

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PenaltyPolicy:
    in_domain: float = 1.0
    out_of_domain: float = math.e

    def render(self, value: float) -> str:
        return f"{value:.6g}"


@dataclass
class AdaptReport:
    candidates_seen: int = 0
    connecting: int = 0
    selected: int = 0
    duplicates_dropped: int = 0
    lm_candidates: int = 0
    lm_selected: int = 0
    reordering_missing: int = 0
    method: str = "op"
    top_k: int | None = None
    min_score: float | None = None
    output_sizes: dict = field(default_factory=dict)
    stage_seconds: dict = field(default_factory=dict)
    throughput: dict = field(default_factory=dict)
    nn_losses: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def _with_feature(line: str, value: str) -> str:
    """Append ``value`` to the score field of a serialized entry."""
    fields = line.split(SEP)
    fields[2] = f"{fields[2]} {value}"
    return SEP.join(fields)


def _text_key(vocab: Vocab, pair: PhrasePair) -> tuple[str, str]:
    return (vocab.text(pair.src), vocab.text(pair.tgt))


def merge_phrase_tables(
    vocab: Vocab,
    in_pt: Iterable[PhrasePair],
    selected: Iterable[PhrasePair],
    policy: PenaltyPolicy = PenaltyPolicy(),
) -> tuple[list[str], int]:
    """Return merged, sorted table lines and the number of dropped duplicates.

    In-domain entries get the in-domain penalty appended as a last score,
    selected entries the out-of-domain one. On a (src, tgt) clash the
    in-domain entry wins.
    """
    keyed: dict[tuple[str, str], str] = {}
    for pair in in_pt:
        key = _text_key(vocab, pair)
        if key in keyed:
            logger.warning("duplicate in-domain entry %s ||| %s", *key)
            continue
        keyed[key] = _with_feature(serialize_entry(vocab, pair), policy.render(policy.in_domain))
    dropped = 0
    out_mark = policy.render(policy.out_of_domain)
    for pair in selected:
        key = _text_key(vocab, pair)
        if key in keyed:
            dropped += 1
            continue
        keyed[key] = _with_feature(serialize_entry(vocab, pair), out_mark)
    if dropped:
        logger.warning("dropped %d selected entries already present in-domain", dropped)
    return [keyed[k] for k in sorted(keyed)], dropped


def select_reordering_entries(
    vocab: Vocab,
    in_reo: Iterable[str],
    out_reo: Iterable[str],
    selected_keys: set[tuple[Phrase, Phrase]],
) -> tuple[list[str], int]:
    """In-domain reordering entries plus the out-of-domain ones for selected pairs.

    Probabilities are copied verbatim. Returns sorted lines and the number of
    selected pairs with no out-of-domain reordering entry.
    """
    keyed: dict[tuple[str, str], str] = {}
    for lineno, line in enumerate(in_reo, 1):
        if not line.strip():
            continue
        pair = parse_entry(vocab, line, lineno)
        keyed.setdefault(_text_key(vocab, pair), line.rstrip("\r\n"))
    found = set()
    for lineno, line in enumerate(out_reo, 1):
        if not line.strip():
            continue
        fields = split_fields(line)
        if len(fields) < 3:
            parse_entry(vocab, line, lineno)  # raises with position
        key = (tuple(vocab.lookup(w) for w in fields[0].split()),
               tuple(vocab.lookup(w) for w in fields[1].split()))
        if key not in selected_keys or key in found:
            continue
        pair = parse_entry(vocab, line, lineno)
        found.add(key)
        keyed.setdefault(_text_key(vocab, pair), line.rstrip("\r\n"))
    missing = len(set(selected_keys) - found)
    return [keyed[k] for k in sorted(keyed)], missing


def augment_lm(in_lm: NgramLm, selected: Iterable[tuple[Phrase, float]]) -> NgramLm:
    return renormalize(insert_ngrams(in_lm, selected))


def attach_qin_feature(lines: Iterable[str], model_in: NnModel) -> list[str]:
    """Append the in-domain translation score (12 significant digits) to each entry."""
    if model_in.config.kind != "tm":
        raise InputError("Q_in feature needs a translation (tm) model")
    out = []
    for line in lines:
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = split_fields(line)
        q = q_score(model_in, fields[0].split(), fields[1].split())
        out.append(_with_feature(SEP.join(fields), f"{q:.12g}"))
    return out


def interpolate_lm_qin(lm: NgramLm, model_in: NnModel, lam: float, query: Sequence[int]) -> float:
    """log10 of a linear mix of the n-gram LM and the re-expanded NN LM score."""
    if not 0.0 <= lam <= 1.0:
        raise InputError("lambda must be in [0, 1]")
    lm_lp = lm.sequence_logprob(query)
    if lam == 1.0:
        return lm_lp
    q = q_score_lm(model_in, lm.vocab.words(query))
    nn_lp = len(query) * math.log10(q)
    if lam == 0.0:
        return nn_lp
    return math.log10(lam * 10.0 ** lm_lp + (1.0 - lam) * 10.0 ** nn_lp)
