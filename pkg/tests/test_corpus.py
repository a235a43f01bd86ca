"""Corpus store: dump parsing, offset index, seek lookup, truncation, passages."""

import random
import statistics
import time

import pytest

from entityrag.corpus import (
    ArticleRecord,
    CorpusStore,
    DumpFormatError,
    DuplicateTitleError,
    build_offset_index,
    default_index_path,
    escape_body,
    load_offset_index,
    load_passages,
    normalize_title,
    render_entity_document,
    segment_dump,
    segment_passages,
    truncate_words,
    unescape_body,
    write_dump,
)

from conftest import SEINE_BODY, SEINE_TITLE


# ---------------------------------------------------------------------------
# title normalization


def test_normalize_title_rules():
    assert normalize_title("Swan_Lake") == "Swan Lake"
    assert normalize_title("  Swan   Lake  ") == "Swan Lake"
    assert normalize_title("swan lake") == "swan lake"  # stays case sensitive


def test_normalize_title_idempotent():
    for raw in ["A_b  c", "Café", "Café", "x", "_a_"]:
        once = normalize_title(raw)
        assert normalize_title(once) == once


def test_normalize_title_nfc():
    # Decomposed and composed accents must land on the same identifier.
    assert normalize_title("Café") == normalize_title("Café")


# ---------------------------------------------------------------------------
# record escaping


@pytest.mark.parametrize(
    "body",
    [
        "plain text",
        "tab\there",
        "newline\nhere",
        "backslash \\ alone",
        "mixed \\n literal and \n real",
        "\\\\t tricky \t\n\\",
        "",
    ],
)
def test_body_escape_round_trip(body):
    escaped = escape_body(body)
    assert "\n" not in escaped and "\t" not in escaped
    assert unescape_body(escaped) == body


def test_unescape_rejects_stray_backslash():
    with pytest.raises(ValueError):
        unescape_body("bad \\x escape")
    with pytest.raises(ValueError):
        unescape_body("trailing \\")


# ---------------------------------------------------------------------------
# offset index build


def test_three_record_index_offsets_increase(tmp_path):
    dump = tmp_path / "d.dump"
    write_dump([("A", "body a"), ("B", "body b"), ("C", "body c")], dump)
    entries, stats = build_offset_index(dump)
    assert stats.article_count == 3
    offsets = [entries[t].byte_offset for t in ("A", "B", "C")]
    assert offsets == sorted(offsets) and len(set(offsets)) == 3
    assert stats.total_bytes == dump.stat().st_size


def test_empty_dump(tmp_path):
    dump = tmp_path / "empty.dump"
    dump.write_text("")
    entries, stats = build_offset_index(dump)
    assert entries == {} and stats.article_count == 0


def test_index_sidecar_round_trip(tmp_path):
    dump = tmp_path / "d.dump"
    write_dump([("B", "b"), ("A", "a")], dump)
    entries, _ = build_offset_index(dump)
    reloaded = load_offset_index(default_index_path(dump))
    assert reloaded == entries
    # Sidecar lines are sorted by title.
    lines = default_index_path(dump).read_text().splitlines()
    assert lines == sorted(lines)


def test_malformed_line_reports_line_number(tmp_path):
    dump = tmp_path / "d.dump"
    dump.write_text("A\tok\nno tab here\n", encoding="utf-8")
    with pytest.raises(DumpFormatError) as err:
        build_offset_index(dump)
    assert err.value.line_no == 2


def test_duplicate_title_reports_both_offsets(tmp_path):
    dump = tmp_path / "d.dump"
    dump.write_text("A\tfirst\nA\tsecond\n", encoding="utf-8")
    with pytest.raises(DuplicateTitleError) as err:
        build_offset_index(dump)
    assert err.value.first_offset == 0
    assert err.value.second_offset == len(b"A\tfirst\n")


def test_entries_do_not_overlap(tmp_path):
    dump = tmp_path / "d.dump"
    write_dump([(f"T{i}", f"body {i} " * (i + 1)) for i in range(20)], dump)
    entries, stats = build_offset_index(dump)
    ranges = sorted(
        (e.byte_offset, e.byte_offset + e.byte_length) for e in entries.values()
    )
    for (start_a, end_a), (start_b, _) in zip(ranges, ranges[1:]):
        assert end_a <= start_b
    assert ranges[-1][1] <= stats.total_bytes


# ---------------------------------------------------------------------------
# lookup


def test_lookup_round_trip(mini_store):
    article = mini_store.lookup_article(SEINE_TITLE)
    assert article is not None
    assert article.title == SEINE_TITLE
    assert article.body == SEINE_BODY


def test_lookup_absent_title(mini_store):
    assert mini_store.lookup_article("Zzz_Nonexistent") is None


def test_lookup_normalizes_query_title(mini_store):
    assert mini_store.lookup_article("Swan_Lake") is not None
    assert mini_store.lookup_article("  Swan   Lake ") is not None


def test_lookup_with_escaped_bodies(tmp_path):
    body = "line one\nline two\twith tab and \\ backslash"
    dump = tmp_path / "d.dump"
    write_dump([("Weird", body)], dump)
    build_offset_index(dump)
    with CorpusStore(dump) as store:
        assert store.lookup_article("Weird").body == body


def test_alias_map_lookup(tmp_path, mini_dump):
    alias_path = tmp_path / "aliases.tsv"
    alias_path.write_text("The_Swan_Lake\tSwan Lake\n", encoding="utf-8")
    with CorpusStore(mini_dump, alias_path=alias_path) as store:
        article = store.lookup_article("The Swan Lake")
        assert article is not None and article.title == "Swan Lake"


def test_stale_index_is_an_error_not_a_miss(tmp_path):
    # Corruption must never be conflated with a missing title.
    from entityrag.corpus import CorpusError

    dump = tmp_path / "d.dump"
    write_dump([("Alpha", "alpha body"), ("Beta", "beta body")], dump)
    index_path = default_index_path(dump)
    build_offset_index(dump, index_path)
    write_dump([("Gamma", "something else entirely"), ("Delta", "beta body")], dump)
    with CorpusStore(dump, index_path=index_path) as store:
        with pytest.raises(CorpusError):
            store.lookup_article("Alpha")


def test_seek_matches_linear_scan_oracle(tmp_path):
    # Independent oracle: read the file linearly, track offsets by hand.
    rng = random.Random(7)
    records = [
        (f"Article {i}", " ".join(f"w{rng.randrange(50)}" for _ in range(rng.randrange(1, 40))))
        for i in range(400)
    ]
    dump = tmp_path / "d.dump"
    write_dump(records, dump)
    build_offset_index(dump)

    oracle = {}
    with open(dump, "r", encoding="utf-8") as fh:
        for line in fh:
            title, _, escaped = line.rstrip("\n").partition("\t")
            body = (
                escaped.replace("\\\\", "\x00")
                .replace("\\n", "\n")
                .replace("\\t", "\t")
                .replace("\x00", "\\")
            )
            oracle[title] = body

    with CorpusStore(dump) as store:
        for title, body in oracle.items():
            article = store.lookup_article(title)
            assert article.body == body, title


def test_lookup_latency_independent_of_corpus_size(tmp_path):
    # Seek-based reads should not slow down as the corpus grows.
    def build(n, name):
        dump = tmp_path / name
        write_dump(((f"T{i}", f"body of article {i} with a few words") for i in range(n)), dump)
        build_offset_index(dump)
        return dump

    def median_lookup_s(dump, n):
        rng = random.Random(3)
        titles = [f"T{rng.randrange(n)}" for _ in range(500)]
        with CorpusStore(dump) as store:
            for title in titles[:50]:  # warmup
                store.lookup_article(title)
            samples = []
            for title in titles:
                start = time.perf_counter()
                store.lookup_article(title)
                samples.append(time.perf_counter() - start)
        return statistics.median(samples)

    small = median_lookup_s(build(1_000, "small.dump"), 1_000)
    large = median_lookup_s(build(20_000, "large.dump"), 20_000)
    assert large < 2 * small, f"median lookup {large:.2e}s vs {small:.2e}s"


# ---------------------------------------------------------------------------
# truncation and rendering


def test_truncate_basic():
    assert truncate_words("a b c d e", 3) == "a b c"


def test_truncate_shorter_than_w():
    text = " ".join(f"w{i}" for i in range(40))
    assert truncate_words(text, 100) == text


def test_truncate_seine_first_100_words(mini_store):
    body = mini_store.lookup_article(SEINE_TITLE).body
    truncated = truncate_words(body, 100)
    assert len(truncated.split()) == 100
    assert "Bobigny" in truncated


def test_truncate_idempotent():
    rng = random.Random(11)
    for _ in range(50):
        text = " ".join(f"t{rng.randrange(9)}" for _ in range(rng.randrange(0, 30)))
        w = rng.randrange(1, 12)
        once = truncate_words(text, w)
        assert truncate_words(once, w) == once


def test_truncate_collapses_whitespace():
    assert truncate_words("a b\n c\t d", 4) == "a b c d"


def test_truncate_rejects_nonpositive_w():
    with pytest.raises(ValueError):
        truncate_words("a b", 0)


def test_render_entity_document_seine(mini_store):
    article = mini_store.lookup_article(SEINE_TITLE)
    rendered = render_entity_document(article, 100)
    assert rendered.startswith(
        "Seine-Saint-Denis\nSeine-Saint-Denis In 2019, it had a population"
    )


def test_render_entity_document_short():
    assert render_entity_document(ArticleRecord("X", "y"), 5) == "X\ny"


def test_render_word_count_excluding_title_line():
    article = ArticleRecord("T", " ".join(f"w{i}" for i in range(120)))
    for w in (5, 120, 500):
        rendered = render_entity_document(article, w)
        body_words = rendered.split("\n", 1)[1].split()
        assert len(body_words) == min(w, 120)


# ---------------------------------------------------------------------------
# passage segmentation


def test_segment_250_words():
    article = ArticleRecord("T", " ".join(f"w{i}" for i in range(250)))
    passages = segment_passages(article, 100)
    assert [len(p.text.split()) for p in passages] == [100, 100, 50]
    assert [p.ordinal for p in passages] == [0, 1, 2]


def test_segment_exactly_one_block():
    article = ArticleRecord("T", " ".join(f"w{i}" for i in range(100)))
    assert len(segment_passages(article, 100)) == 1


def test_segment_round_trip_oracle():
    rng = random.Random(5)
    words = [f"token{rng.randrange(1000)}" for _ in range(10_000)]
    article = ArticleRecord("Long", " ".join(words))
    passages = segment_passages(article, 100)
    rejoined = " ".join(p.text for p in passages).split()
    assert rejoined == words
    assert all(len(p.text.split()) == 100 for p in passages[:-1])


def test_segment_dump_and_load(tmp_path, mini_dump):
    out = tmp_path / "passages.jsonl"
    articles, passages = segment_dump(mini_dump, out, segment_len=50)
    assert articles == 5
    loaded = load_passages(out)
    assert len(loaded) == passages
    seine = [p for p in loaded if p.source_title == SEINE_TITLE]
    assert [p.ordinal for p in seine] == list(range(len(seine)))
    assert " ".join(p.text for p in seine).split() == SEINE_BODY.split()
