"""Knowledge-base article store with byte-offset seek lookup.

The corpus lives in a single UTF-8 dump file, one article per line:
``title<TAB>body`` with body newlines escaped as ``\\n``, tabs as ``\\t``
and backslashes as ``\\\\``. A sidecar offset index maps each normalized
title to the byte range of its record, so an article read is a single
``seek`` plus a bounded ``read`` regardless of corpus size.
"""

from __future__ import annotations

import json
import logging
import threading
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

log = logging.getLogger(__name__)

OFFSET_INDEX_SUFFIX = ".offsets"


class CorpusError(Exception):
    """Base error for dump parsing and article lookup problems."""


class DumpFormatError(CorpusError):
    """A dump or index line does not conform to the record format."""

    def __init__(self, path: Path | str, line_no: int, reason: str):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{path}:{line_no}: {reason}")


class DuplicateTitleError(CorpusError):
    """The same normalized title appears twice in one dump."""

    def __init__(self, title: str, first_offset: int, second_offset: int):
        self.title = title
        self.first_offset = first_offset
        self.second_offset = second_offset
        super().__init__(
            f"duplicate title {title!r} at byte offsets "
            f"{first_offset} and {second_offset}"
        )


@dataclass(frozen=True)
class ArticleRecord:
    """A stored article: normalized title plus the full body text."""

    title: str
    body: str


@dataclass(frozen=True)
class OffsetEntry:
    """Byte range of one dump record, newline separator excluded."""

    title: str
    byte_offset: int
    byte_length: int


@dataclass(frozen=True)
class Passage:
    """A fixed-length word block cut from one article."""

    source_title: str
    ordinal: int
    text: str

    @property
    def passage_id(self) -> str:
        return f"{self.source_title}#{self.ordinal}"


@dataclass(frozen=True)
class CorpusStats:
    article_count: int
    total_bytes: int


def normalize_title(title: str) -> str:
    """Canonical form of an article identifier.

    Unicode NFC, underscores to spaces, internal whitespace collapsed to
    single spaces, outer whitespace stripped. Matching stays case
    sensitive. The function is idempotent.
    """
    normalized = unicodedata.normalize("NFC", title).replace("_", " ")
    return " ".join(normalized.split())


_UNESCAPE = {"\\": "\\", "t": "\t", "n": "\n"}


def escape_body(body: str) -> str:
    return body.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def unescape_body(escaped: str) -> str:
    """Invert :func:`escape_body`; rejects stray backslashes."""
    out: list[str] = []
    i = 0
    while True:
        j = escaped.find("\\", i)
        if j < 0:
            out.append(escaped[i:])
            return "".join(out)
        out.append(escaped[i:j])
        if j + 1 >= len(escaped) or escaped[j + 1] not in _UNESCAPE:
            raise ValueError(f"invalid escape sequence at position {j}")
        out.append(_UNESCAPE[escaped[j + 1]])
        i = j + 2


def write_dump(records: Iterable[tuple[str, str]], dump_path: Path | str) -> int:
    """Write ``(title, body)`` pairs as a dump file; returns record count.

    Titles are normalized on write so the file round-trips through
    :func:`build_offset_index` unchanged.
    """
    count = 0
    with open(dump_path, "w", encoding="utf-8", newline="") as fh:
        for title, body in records:
            normalized = normalize_title(title)
            if not normalized:
                raise ValueError(f"empty title for record {count + 1}")
            fh.write(f"{normalized}\t{escape_body(body)}\n")
            count += 1
    return count


def _parse_record_line(
    dump_path: Path | str, line_no: int, record: bytes
) -> tuple[str, str]:
    """Decode one record (separator stripped) into (normalized title, escaped body)."""
    try:
        text = record.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DumpFormatError(dump_path, line_no, f"invalid UTF-8: {exc}") from exc
    parts = text.split("\t")
    if len(parts) != 2:
        raise DumpFormatError(
            dump_path, line_no, f"expected 'title<TAB>body', found {len(parts)} fields"
        )
    title = normalize_title(parts[0])
    if not title:
        raise DumpFormatError(dump_path, line_no, "empty title")
    return title, parts[1]


def build_offset_index(
    dump_path: Path | str, index_path: Path | str | None = None
) -> tuple[dict[str, OffsetEntry], CorpusStats]:
    """Scan a dump once, record each article's byte range, persist the sidecar.

    Returns the in-memory index (normalized title -> entry) together with
    corpus statistics. Byte offsets exclude the trailing newline so a
    lookup reads exactly one record and nothing past it.
    """
    dump_path = Path(dump_path)
    entries: dict[str, OffsetEntry] = {}
    offset = 0
    with open(dump_path, "rb") as fh:
        for line_no, raw in enumerate(iter(fh.readline, b""), start=1):
            record = raw[:-1] if raw.endswith(b"\n") else raw
            title, escaped = _parse_record_line(dump_path, line_no, record)
            try:
                unescape_body(escaped)
            except ValueError as exc:
                raise DumpFormatError(dump_path, line_no, str(exc)) from exc
            previous = entries.get(title)
            if previous is not None:
                raise DuplicateTitleError(title, previous.byte_offset, offset)
            entries[title] = OffsetEntry(title, offset, len(record))
            offset += len(raw)
    stats = CorpusStats(article_count=len(entries), total_bytes=offset)
    write_offset_index(entries, index_path or default_index_path(dump_path))
    return entries, stats


def default_index_path(dump_path: Path | str) -> Path:
    return Path(str(dump_path) + OFFSET_INDEX_SUFFIX)


def write_offset_index(
    entries: dict[str, OffsetEntry], index_path: Path | str
) -> None:
    with open(index_path, "w", encoding="utf-8", newline="") as fh:
        for title in sorted(entries):
            entry = entries[title]
            fh.write(f"{entry.title}\t{entry.byte_offset}\t{entry.byte_length}\n")


def load_offset_index(index_path: Path | str) -> dict[str, OffsetEntry]:
    entries: dict[str, OffsetEntry] = {}
    with open(index_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise DumpFormatError(index_path, line_no, "expected 3 fields")
            try:
                entries[parts[0]] = OffsetEntry(parts[0], int(parts[1]), int(parts[2]))
            except ValueError as exc:
                raise DumpFormatError(index_path, line_no, str(exc)) from exc
    return entries


def load_alias_map(alias_path: Path | str) -> dict[str, str]:
    """Load ``alias<TAB>canonical_title`` lines; both sides are normalized."""
    aliases: dict[str, str] = {}
    with open(alias_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise DumpFormatError(alias_path, line_no, "expected 'alias<TAB>title'")
            aliases[normalize_title(parts[0])] = normalize_title(parts[1])
    return aliases


def scan_dump(dump_path: Path | str) -> Iterator[ArticleRecord]:
    """Yield every article in file order via a plain linear read."""
    with open(dump_path, "rb") as fh:
        for line_no, raw in enumerate(iter(fh.readline, b""), start=1):
            record = raw[:-1] if raw.endswith(b"\n") else raw
            title, escaped = _parse_record_line(dump_path, line_no, record)
            yield ArticleRecord(title, unescape_body(escaped))


class CorpusStore:
    """Read-only article store backed by a dump file plus its offset index.

    The index is loaded fully into memory; article reads seek straight to
    the record. Instances keep one file handle and serialize seek-reads on
    it, so a single store can be shared by concurrent readers. Readers that
    must not contend can each open their own store over the same index.
    """

    def __init__(
        self,
        dump_path: Path | str,
        index_path: Path | str | None = None,
        alias_path: Path | str | None = None,
        index: dict[str, OffsetEntry] | None = None,
        aliases: dict[str, str] | None = None,
    ):
        self.dump_path = Path(dump_path)
        self.index_path = Path(index_path) if index_path else default_index_path(dump_path)
        if index is None:
            index = load_offset_index(self.index_path)
        self._index = index
        if aliases is None:
            aliases = load_alias_map(alias_path) if alias_path else {}
        self._aliases = aliases
        self._fh = open(self.dump_path, "rb")
        self._lock = threading.Lock()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "CorpusStore":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, title: str) -> bool:
        return self.resolve_title(title) is not None

    def titles(self) -> Iterable[str]:
        return self._index.keys()

    def disk_bytes(self) -> int:
        """Dump plus offset-index size on disk."""
        return self.dump_path.stat().st_size + self.index_path.stat().st_size

    def resolve_title(self, title: str) -> str | None:
        """Normalize and, if needed, follow one alias hop; None if unknown."""
        normalized = normalize_title(title)
        if normalized in self._index:
            return normalized
        canonical = self._aliases.get(normalized)
        if canonical is not None and canonical in self._index:
            return canonical
        return None

    def lookup_article(self, title: str) -> ArticleRecord | None:
        """Fetch an article by title; None when the title is not indexed.

        I/O and index-corruption problems raise; they are never conflated
        with a missing title.
        """
        resolved = self.resolve_title(title)
        if resolved is None:
            return None
        entry = self._index[resolved]
        with self._lock:
            self._fh.seek(entry.byte_offset)
            record = self._fh.read(entry.byte_length)
        stored_title, escaped = _parse_record_line(self.dump_path, 0, record)
        if stored_title != entry.title:
            raise CorpusError(
                f"offset index is stale: expected {entry.title!r} at byte "
                f"{entry.byte_offset}, found {stored_title!r}"
            )
        return ArticleRecord(stored_title, unescape_body(escaped))


def truncate_words(text: str, w: int) -> str:
    """First ``w`` whitespace-delimited words, rejoined with single spaces."""
    if w < 1:
        raise ValueError(f"w must be >= 1, got {w}")
    return " ".join(text.split()[:w])


def render_entity_document(article: ArticleRecord, w: int) -> str:
    """Prompt-ready document text: title line, then the truncated body."""
    return f"{article.title}\n{truncate_words(article.body, w)}"


def segment_passages(article: ArticleRecord, segment_len: int = 100) -> list[Passage]:
    """Cut an article into consecutive non-overlapping word blocks.

    Every passage except possibly the last holds exactly ``segment_len``
    words; concatenating the passages in order reproduces the article's
    word sequence.
    """
    if segment_len < 1:
        raise ValueError(f"segment_len must be >= 1, got {segment_len}")
    words = article.body.split()
    return [
        Passage(article.title, ordinal, " ".join(words[start : start + segment_len]))
        for ordinal, start in enumerate(range(0, len(words), segment_len))
    ]


def write_passages(passages: Iterable[Passage], out_path: Path | str) -> int:
    """Persist passages as JSON lines ``{"title", "ordinal", "text"}``."""
    count = 0
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        for passage in passages:
            fh.write(
                json.dumps(
                    {
                        "title": passage.source_title,
                        "ordinal": passage.ordinal,
                        "text": passage.text,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            count += 1
    return count


def load_passages(passages_path: Path | str) -> list[Passage]:
    passages: list[Passage] = []
    with open(passages_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                passages.append(Passage(obj["title"], int(obj["ordinal"]), obj["text"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise DumpFormatError(passages_path, line_no, str(exc)) from exc
    return passages


def segment_dump(
    dump_path: Path | str, out_path: Path | str, segment_len: int = 100
) -> tuple[int, int]:
    """Segment every dump article into passages; returns (articles, passages)."""
    articles = 0
    written = 0
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        for article in scan_dump(dump_path):
            articles += 1
            for passage in segment_passages(article, segment_len):
                fh.write(
                    json.dumps(
                        {
                            "title": passage.source_title,
                            "ordinal": passage.ordinal,
                            "text": passage.text,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
                written += 1
    return articles, written
