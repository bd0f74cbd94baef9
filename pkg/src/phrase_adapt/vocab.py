"""Token interning and phrase representation.

A phrase is a plain tuple of integer token ids. Every table, LM and index in
one run shares a single :class:`Vocab`, so ids are comparable everywhere.
"""
from __future__ import annotations

from typing import Iterable, Sequence

from .errors import FormatError, InputError

UNK = "<unk>"
FIELD_SEP = "|||"

Phrase = tuple  # tuple[int, ...]; kept as an alias for readability


class Vocab:
    """Bidirectional token <-> id map with dense, first-seen ids.

    ``<unk>`` is always id 0.
    """

    def __init__(self, tokens: Iterable[str] = ()) -> None:
        self._ids: dict[str, int] = {UNK: 0}
        self._tokens: list[str] = [UNK]
        for tok in tokens:
            self.intern(tok)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __iter__(self):
        return iter(self._tokens)

    def intern(self, token: str) -> int:
        idx = self._ids.get(token)
        if idx is not None:
            return idx
        if not token or any(c.isspace() for c in token):
            raise InputError(f"invalid token {token!r}")
        idx = len(self._tokens)
        self._ids[token] = idx
        self._tokens.append(token)
        return idx

    def lookup(self, token: str) -> int:
        """Id of ``token`` without extending the vocab (0 when unknown)."""
        return self._ids.get(token, 0)

    def resolve(self, idx: int) -> str:
        return self._tokens[idx]

    def words(self, phrase: Sequence[int]) -> list[str]:
        tokens = self._tokens
        return [tokens[i] for i in phrase]

    def text(self, phrase: Sequence[int]) -> str:
        tokens = self._tokens
        return " ".join([tokens[i] for i in phrase])

    def tokens(self) -> list[str]:
        return list(self._tokens)


def intern(vocab: Vocab, token: str) -> int:
    return vocab.intern(token)


def resolve(vocab: Vocab, idx: int) -> str:
    return vocab.resolve(idx)


def parse_phrase(vocab: Vocab, text: str) -> Phrase:
    """Split ``text`` on whitespace and intern every token."""
    toks = text.split()
    if not toks:
        raise InputError("empty phrase")
    ids = vocab._ids
    out = []
    for tok in toks:
        idx = ids.get(tok)
        if idx is None:
            if tok == FIELD_SEP:
                raise FormatError(f"field separator inside phrase: {text!r}")
            idx = vocab.intern(tok)
        out.append(idx)
    return tuple(out)


def serialize_phrase(vocab: Vocab, phrase: Phrase) -> str:
    return vocab.text(phrase)
