"""ARPA back-off n-gram language models.

Entries of all orders live in one dict keyed by token-id tuples; back-off
weights live in a second dict. Everything is log10, as in ARPA files.

Context-only entries (created so every n-gram has its prefix present) carry
the SRILM placeholder log-probability ``-99``. Above the unigram level a
placeholder is *not* an explicit probability: queries back off through it.
A ``-99`` unigram is taken literally (probability 1e-99), which is how
SRILM treats ``<s>``.
"""
from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from typing import Iterable, Iterator, Sequence

from .errors import FormatError, InputError, NormalizationError
from .vocab import UNK, Phrase, Vocab

logger = logging.getLogger(__name__)

PLACEHOLDER = -99.0
OOV_FLOOR = -10.0
MASS_EPSILON = 1e-6


class NgramLm:
    def __init__(self, order: int, vocab: Vocab) -> None:
        if order < 1:
            raise InputError("LM order must be >= 1")
        self.order = order
        self.vocab = vocab
        self.probs: dict[Phrase, float] = {}
        self.backoffs: dict[Phrase, float] = {}
        self.oov_floor = OOV_FLOOR

    def copy(self) -> "NgramLm":
        lm = NgramLm(self.order, self.vocab)
        lm.probs = dict(self.probs)
        lm.backoffs = dict(self.backoffs)
        lm.oov_floor = self.oov_floor
        return lm

    def __len__(self) -> int:
        return len(self.probs)

    def __contains__(self, ngram: Phrase) -> bool:
        return ngram in self.probs

    def counts(self) -> list[int]:
        c = [0] * self.order
        for ng in self.probs:
            c[len(ng) - 1] += 1
        return c

    def entries(self, n: int) -> Iterator[Phrase]:
        return (ng for ng in self.probs if len(ng) == n)

    def is_explicit(self, ngram: Phrase) -> bool:
        lp = self.probs.get(ngram)
        if lp is None:
            return False
        return len(ngram) == 1 or lp > PLACEHOLDER

    def words(self) -> list[int]:
        """The LM vocabulary: every token with a unigram entry."""
        return sorted(ng[0] for ng in self.probs if len(ng) == 1)

    def add(self, ngram: Phrase, logprob: float, backoff: float | None = None) -> None:
        ngram = tuple(ngram)
        if not 1 <= len(ngram) <= self.order:
            raise InputError(f"n-gram order {len(ngram)} outside 1..{self.order}")
        self.probs[ngram] = logprob
        if backoff is not None and len(ngram) < self.order:
            self.backoffs[ngram] = backoff

    # -- queries -----------------------------------------------------------

    def cond_logprob(self, context: Sequence[int], word: int) -> float:
        """log10 p(word | context) with Katz back-off; total over all inputs."""
        probs = self.probs
        if (word,) not in probs and (0,) in probs:
            word = 0
        n = self.order
        ctx = tuple(context[len(context) - n + 1:]) if n > 1 and context else ()
        bo = 0.0
        while ctx:
            lp = probs.get(ctx + (word,))
            if lp is not None and lp > PLACEHOLDER:
                return bo + lp
            bo += self.backoffs.get(ctx, 0.0)
            ctx = ctx[1:]
        lp = probs.get((word,))
        if lp is None:
            return bo + self.oov_floor
        return bo + lp

    def sequence_logprob(self, phrase: Sequence[int]) -> float:
        """log10 probability of a phrase; no sentence-boundary markers."""
        if not phrase:
            raise InputError("empty phrase")
        n = self.order
        total = 0.0
        for k, w in enumerate(phrase):
            total += self.cond_logprob(phrase[max(0, k - n + 1):k], w)
        return total

    def distribution_sum(self, context: Sequence[int]) -> float:
        """Sum of p(w | context) over the whole LM vocabulary, by enumeration."""
        return math.fsum(10.0 ** self.cond_logprob(context, w) for w in self.words())


def cond_logprob(lm: NgramLm, context: Sequence[int], word: int) -> float:
    return lm.cond_logprob(context, word)


def sequence_logprob(lm: NgramLm, phrase: Sequence[int]) -> float:
    return lm.sequence_logprob(phrase)


# -- ARPA I/O ---------------------------------------------------------------


def parse_arpa(source: Iterable[str], vocab: Vocab) -> NgramLm:
    """Read an ARPA model from a line stream."""
    lines = iter(enumerate(source, 1))
    lineno = 0
    for lineno, line in lines:
        if line.strip() == "\\data\\":
            break
    else:
        raise FormatError("no \\data\\ header", lineno)

    declared: dict[int, int] = {}
    section_line = None
    for lineno, line in lines:
        s = line.strip()
        if not s:
            continue
        if s.startswith("ngram "):
            try:
                k, v = s[6:].split("=")
                declared[int(k)] = int(v)
            except ValueError:
                raise FormatError(f"bad count line {s!r}", lineno) from None
            continue
        section_line = (lineno, s)
        break
    if not declared:
        raise FormatError("no n-gram counts in \\data\\ section", lineno)
    order = max(declared)
    if sorted(declared) != list(range(1, order + 1)):
        raise FormatError(f"non-contiguous orders {sorted(declared)}", lineno)

    lm = NgramLm(order, vocab)
    intern = vocab.intern
    loaded = Counter()
    current = 0
    ended = False
    pending = [section_line] if section_line else []

    def records():
        yield from pending
        for ln, raw in lines:
            yield ln, raw.strip()

    for lineno, s in records():
        if not s:
            continue
        if s.startswith("\\"):
            if s == "\\end\\":
                ended = True
                break
            if s.endswith("-grams:"):
                try:
                    current = int(s[1:-len("-grams:")])
                except ValueError:
                    raise FormatError(f"bad section header {s!r}", lineno) from None
                if current not in declared:
                    raise FormatError(f"undeclared section {s!r}", lineno)
                continue
            raise FormatError(f"unexpected line {s!r}", lineno)
        if not current:
            raise FormatError("entry outside any n-gram section", lineno)
        fields = s.split()
        if len(fields) not in (current + 1, current + 2):
            raise FormatError(f"expected {current} words in {s!r}", lineno)
        try:
            lp = float(fields[0])
            bo = float(fields[current + 1]) if len(fields) == current + 2 else None
        except ValueError:
            raise FormatError(f"malformed probability in {s!r}", lineno) from None
        if not math.isfinite(lp) or (bo is not None and not math.isfinite(bo)):
            raise FormatError(f"non-finite value in {s!r}", lineno)
        if lp > 1e-9:
            raise FormatError(f"positive log-probability in {s!r}", lineno)
        ngram = tuple(intern(w) for w in fields[1:current + 1])
        lm.add(ngram, max(min(lp, 0.0), PLACEHOLDER), bo)
        loaded[current] += 1
    if not ended:
        raise FormatError("missing \\end\\ marker", lineno)
    for k, n in declared.items():
        if loaded[k] != n:
            raise FormatError(f"declared {n} {k}-grams, found {loaded[k]}")
    return lm


def format_log(x: float) -> str:
    """Seven significant digits; six decimals once |x| >= 10."""
    if x <= PLACEHOLDER:
        return "-99"
    s = f"{x:.6f}" if abs(x) >= 10 else f"{x:.7g}"
    return "0" if float(s) == 0 else s


def serialize_arpa(lm: NgramLm, sink) -> None:
    """Write canonical ARPA: ascending sections, entries sorted by token strings."""
    words = lm.vocab.words
    by_order: dict[int, list] = defaultdict(list)
    for ng in lm.probs:
        by_order[len(ng)].append((words(ng), ng))
    sink.write("\n\\data\\\n")
    for k in range(1, lm.order + 1):
        sink.write(f"ngram {k}={len(by_order[k])}\n")
    for k in range(1, lm.order + 1):
        sink.write(f"\n\\{k}-grams:\n")
        for toks, ng in sorted(by_order[k]):
            line = f"{format_log(lm.probs[ng])}\t{' '.join(toks)}"
            bo = lm.backoffs.get(ng)
            if bo is not None and k < lm.order:
                line += f"\t{format_log(bo)}"
            sink.write(line + "\n")
    sink.write("\n\\end\\\n")


# -- insertion and renormalization --------------------------------------------


def ensure_chain(lm: NgramLm) -> int:
    """Add placeholder entries so every n-gram's prefix and words exist.

    Returns the number of entries created.
    """
    created = 0
    for ng in list(lm.probs):
        for j in range(1, len(ng)):
            prefix = ng[:j]
            if prefix not in lm.probs:
                lm.add(prefix, PLACEHOLDER, 0.0)
                created += 1
        for w in ng:
            if (w,) not in lm.probs:
                lm.add((w,), PLACEHOLDER, 0.0)
                created += 1
    return created


def insert_ngrams(lm: NgramLm, entries: Iterable[tuple[Phrase, float]]) -> NgramLm:
    """Return a copy of ``lm`` with new n-grams added.

    Existing explicit entries are never overwritten. A placeholder above the
    unigram level may be filled in, keeping its back-off weight.
    """
    out = lm.copy()
    for ngram, logprob in entries:
        ngram = tuple(ngram)
        if len(ngram) > out.order:
            raise InputError(f"cannot insert {len(ngram)}-gram into order-{out.order} LM")
        if not ngram:
            raise InputError("empty n-gram")
        if out.is_explicit(ngram):
            continue
        if ngram in out.probs:
            out.probs[ngram] = logprob
            continue
        out.add(ngram, logprob, 0.0 if len(ngram) < out.order else None)
    ensure_chain(out)
    return out


def _continuations(lm: NgramLm) -> dict[Phrase, list[int]]:
    conts: dict[Phrase, list[int]] = defaultdict(list)
    for ng, lp in lm.probs.items():
        if len(ng) > 1 and lp > PLACEHOLDER:
            conts[ng[:-1]].append(ng[-1])
    return conts


def _scale(lm: NgramLm, ctx: Phrase, words: list[int], factor: float) -> None:
    shift = math.log10(factor)
    for w in words:
        lm.probs[ctx + (w,)] += shift


def renormalize(lm: NgramLm, epsilon: float = MASS_EPSILON) -> NgramLm:
    """Recompute every back-off weight so each context's distribution sums to 1.

    Contexts are processed shortest first, since a context's weight depends
    on the already-normalized distribution one order down.
    """
    out = lm.copy()
    ensure_chain(out)
    vocab_words = out.words()
    n_vocab = len(vocab_words)

    # unigram mass, excluding -99 placeholders
    uni = [w for w in vocab_words if out.probs[(w,)] > PLACEHOLDER]
    mass = math.fsum(10.0 ** out.probs[(w,)] for w in uni)
    if mass <= 0:
        raise NormalizationError("unigram distribution has no mass")
    if abs(mass - 1.0) > 1e-6:
        logger.info("rescaling unigram mass %.9g to 1", mass)
        _scale(out, (), uni, 1.0 / mass)

    conts = _continuations(out)
    for k in range(1, out.order):
        contexts = sorted(ng for ng in out.probs if len(ng) == k)
        for ctx in contexts:
            words = conts.get(ctx)
            if not words:
                out.backoffs[ctx] = 0.0
                continue
            probs = [10.0 ** out.probs[ctx + (w,)] for w in words]
            explicit = math.fsum(probs)
            if len(words) >= n_vocab:
                if abs(explicit - 1.0) > 1e-12:
                    _scale(out, ctx, words, 1.0 / explicit)
                out.backoffs[ctx] = 0.0
                continue
            lower_ctx = ctx[1:]
            lower = math.fsum(10.0 ** out.cond_logprob(lower_ctx, w) for w in words)
            if lower >= 1.0 - 1e-12:
                name = " ".join(out.vocab.words(ctx))
                raise NormalizationError(
                    f"context {name!r}: lower-order mass {lower:.12g} leaves nothing to back off to"
                )
            if explicit >= 1.0 - epsilon:
                _scale(out, ctx, words, (1.0 - epsilon) / explicit)
                explicit = 1.0 - epsilon
            out.backoffs[ctx] = math.log10((1.0 - explicit) / (1.0 - lower))
    return out


# -- fixture generator --------------------------------------------------------


def train_addk_lm(
    corpus: Iterable[Sequence[str]],
    order: int,
    k: float,
    vocab: Vocab,
) -> NgramLm:
    """Add-k estimates for observed n-grams; back-off weights fill the rest.

    The unigram level covers every observed word plus ``<unk>``. Higher
    orders list only observed n-grams, each with
    ``(c(h w) + k) / (c(h) + k |V|)``.
    """
    if order < 1:
        raise InputError("order must be >= 1")
    if not k > 0:
        raise InputError("k must be positive")
    counts: list[Counter] = [Counter() for _ in range(order + 1)]
    ctx_totals: list[Counter] = [Counter() for _ in range(order + 1)]
    n_tokens = 0
    for sent in corpus:
        ids = tuple(vocab.intern(w) for w in sent)
        n_tokens += len(ids)
        for i in range(len(ids)):
            for n in range(1, order + 1):
                if i + n > len(ids):
                    break
                ng = ids[i:i + n]
                counts[n][ng] += 1
                ctx_totals[n][ng[:-1]] += 1
    if n_tokens == 0:
        raise InputError("empty corpus")

    lm = NgramLm(order, vocab)
    unk = vocab.intern(UNK)
    uni_words = set(ng[0] for ng in counts[1]) | {unk}
    size = len(uni_words)
    for w in sorted(uni_words):
        c = counts[1][(w,)]
        lm.add((w,), math.log10((c + k) / (n_tokens + k * size)), 0.0)
    for n in range(2, order + 1):
        for ng, c in counts[n].items():
            total = ctx_totals[n][ng[:-1]]
            lm.add(ng, math.log10((c + k) / (total + k * size)), 0.0)
    return renormalize(lm)

