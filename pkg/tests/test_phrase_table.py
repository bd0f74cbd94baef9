import io

import pytest

from phrase_adapt.errors import FormatError
from phrase_adapt.phrase_table import (
    PhrasePair,
    TableStats,
    parse_entry,
    serialize_entry,
    stream_table,
    table_stats,
)
from phrase_adapt.vocab import Vocab


def test_parse_basic_entry():
    v = Vocab()
    pair = parse_entry(v, "la raison ||| the reason ||| 0.5 0.2 0.4 0.1")
    assert len(pair.src) == 2 and len(pair.tgt) == 2
    assert pair.scores == (0.5, 0.2, 0.4, 0.1)


def test_minimal_entry():
    pair = parse_entry(Vocab(), "a ||| b ||| 1")
    assert pair.scores == (1.0,)
    assert pair.extra == ()


def test_extra_fields_pass_through():
    v = Vocab()
    line = "a ||| b ||| 0.5 ||| 0-0 ||| 3 3 2"
    pair = parse_entry(v, line)
    assert pair.extra == ("0-0", "3 3 2")
    assert serialize_entry(v, pair) == line


def test_tolerates_missing_spaces_and_emits_canonical():
    v = Vocab()
    pair = parse_entry(v, "a b|||c ||| 0.5")
    assert serialize_entry(v, pair) == "a b ||| c ||| 0.5"


@pytest.mark.parametrize("line", [
    "a ||| b",
    "a ||| b ||| x",
    "a ||| b ||| 0",
    "a ||| b ||| -0.5",
    "a ||| b ||| nan",
    " ||| b ||| 0.5",
    "a |||  ||| 0.5",
])
def test_malformed_entries(line):
    with pytest.raises(FormatError):
        parse_entry(Vocab(), line, lineno=7)


def test_error_carries_line_number():
    with pytest.raises(FormatError, match="line 3"):
        list(stream_table(io.StringIO("a ||| b ||| 1\nc ||| d ||| 1\nbad\n"), Vocab()))


def test_penalty_renders_as_last_score():
    v = Vocab()
    pair = parse_entry(v, "c d ||| e f ||| 0.3")
    out = pair.with_scores(pair.scores + (2.71828,))
    assert serialize_entry(v, out).endswith("||| 0.3 2.71828")


def test_shortest_round_trip_score_formatting():
    v = Vocab()
    pair = parse_entry(v, "a ||| b ||| 0.5").with_scores([0.1 + 0.2, 1.0, 1e-30])
    line = serialize_entry(v, pair)
    assert line == "a ||| b ||| 0.30000000000000004 1 1e-30"
    assert parse_entry(v, line) == pair


def test_stream_preserves_order():
    v = Vocab()
    text = "a ||| x ||| 1\nb ||| y ||| 1\nc ||| z ||| 1\n"
    pairs = list(stream_table(io.StringIO(text), v))
    assert [v.text(p.src) for p in pairs] == ["a", "b", "c"]


def test_empty_stream():
    stats = table_stats(io.StringIO(""), Vocab())
    assert stats.entries == 0


def test_lenient_mode_skips_and_counts(caplog):
    text = "a ||| x ||| 1\nbroken line\nc ||| z ||| 1\n"
    stats = TableStats()
    pairs = list(stream_table(io.StringIO(text), Vocab(), strict=False, stats=stats))
    assert len(pairs) == 2
    assert stats.malformed == 1
    assert "malformed" in caplog.text


def test_stats():
    text = "a b ||| x ||| 1\na b ||| y z w ||| 1\nc ||| z ||| 1\n"
    stats = table_stats(io.StringIO(text), Vocab())
    assert (stats.entries, stats.max_src_len, stats.max_tgt_len, stats.distinct_src) == (3, 2, 3, 2)


def test_byte_identical_round_trip():
    text = (
        "la raison ||| the reason ||| 0.50 0.2 4e-05 1 ||| 0-0 1-1 ||| 10 4 2\n"
        "pour laquelle ||| why ||| 0.125 0.3 0.1 0.02\n"
        "je tiens ||| I like ||| 1 1 1 1 ||| 0-0 1-1\n"
    )
    v = Vocab()
    out = "".join(serialize_entry(v, p) + "\n" for p in stream_table(io.StringIO(text), v))
    assert out == text


def test_gzip_input(tmp_path):
    import gzip
    from phrase_adapt.textio import open_text
    path = tmp_path / "pt.gz"
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        fh.write("a ||| b ||| 0.5\n")
    with open_text(path) as fh:
        pairs = list(stream_table(fh, Vocab()))
    assert len(pairs) == 1


def test_pair_equality_ignores_score_spelling():
    v = Vocab()
    assert parse_entry(v, "a ||| b ||| 0.50") == parse_entry(v, "a ||| b ||| 0.5")
    assert isinstance(parse_entry(v, "a ||| b ||| 1"), PhrasePair)
