"""Retrieval backends sharing one result contract, plus the run cache.

Three ways to obtain augmentation documents:

* entity retrieval: resolve the question's entity spans to articles and
  take each article's opening words; no passage index is consulted,
* BM25 over fixed-length passages via an in-memory inverted index,
* exact dot-product ranking over externally supplied embedding vectors.

Every backend returns :class:`RetrievedDocument` lists with gapless
1-based ranks. Retrieval results for a whole run are persisted in a JSONL
cache keyed by run id, so the answering stage never needs the indexes.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import tempfile
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .annotations import AnnotatedQuestion, select_first_k_unique
from .corpus import CorpusStore, Passage, render_entity_document

log = logging.getLogger(__name__)

DEFAULT_K = 4
DEFAULT_TRUNCATE_WORDS = 100
DEFAULT_K1 = 0.9
DEFAULT_B = 0.4

RETRIEVER_KINDS = ("entity", "bm25", "dot_product")

CACHE_FILENAME = "retrieved.jsonl"


class CacheMissError(KeyError):
    """No cache exists for the requested run id."""


class CacheCorruptError(ValueError):
    """A cache record cannot be decoded."""


@dataclass(frozen=True)
class RetrievedDocument:
    """A ranked document handed to the reader and judged for relevance."""

    source_title: str
    text: str
    rank: int
    score: float

    def to_wire(self) -> dict:
        return {
            "rank": self.rank,
            "score": self.score,
            "title": self.source_title,
            "text": self.text,
        }

    @classmethod
    def from_wire(cls, obj: Mapping) -> "RetrievedDocument":
        return cls(
            source_title=obj["title"],
            text=obj["text"],
            rank=int(obj["rank"]),
            score=float(obj["score"]),
        )


@dataclass
class RetrieverConfig:
    """Which backend to use, how many documents, and the truncation length."""

    kind: str = "entity"
    k: int = DEFAULT_K
    truncate_words: int = DEFAULT_TRUNCATE_WORDS

    def __post_init__(self):
        if self.kind not in RETRIEVER_KINDS:
            raise ValueError(f"unknown retriever kind {self.kind!r}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.truncate_words < 1:
            raise ValueError(f"truncate_words must be >= 1, got {self.truncate_words}")


# ---------------------------------------------------------------------------
# entity retrieval


def entity_retrieve(
    question: AnnotatedQuestion, store: CorpusStore, config: RetrieverConfig
) -> list[RetrievedDocument]:
    """One document per resolvable entity among the first k unique entities.

    Documents keep span order and carry score 0.0 (there is no similarity
    score to rank by). Titles missing from the store are skipped with a
    warning; a question without spans yields an empty list.
    """
    if not question.spans:
        return []
    docs: list[RetrievedDocument] = []
    for title in select_first_k_unique(question.spans, config.k):
        article = store.lookup_article(title)
        if article is None:
            log.warning(
                "question %s: entity %r not found in corpus, skipping",
                question.question_id,
                title,
            )
            continue
        docs.append(
            RetrievedDocument(
                source_title=article.title,
                text=render_entity_document(article, config.truncate_words),
                rank=len(docs) + 1,
                score=0.0,
            )
        )
    return docs


# ---------------------------------------------------------------------------
# BM25

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on any non-alphanumeric character."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Bm25Index:
    """Inverted index over passages with per-term postings.

    ``postings`` maps each term to (doc id, term frequency) pairs sorted by
    doc id; doc ids are positions in ``passages``.
    """

    passages: list[Passage]
    doc_len: list[int]
    postings: dict[str, list[tuple[int, int]]]
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    @property
    def n_docs(self) -> int:
        return len(self.passages)

    @property
    def avgdl(self) -> float:
        return sum(self.doc_len) / len(self.doc_len)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1 + (self.n_docs - df + 0.5) / (df + 0.5))

    def save(self, path: Path | str) -> None:
        payload = {
            "k1": self.k1,
            "b": self.b,
            "passages": [
                {"title": p.source_title, "ordinal": p.ordinal, "text": p.text}
                for p in self.passages
            ],
            "doc_len": self.doc_len,
            "postings": {t: plist for t, plist in sorted(self.postings.items())},
        }
        with open(path, "w", encoding="utf-8", newline="") as fh:
            json.dump(payload, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path: Path | str) -> "Bm25Index":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(
            passages=[
                Passage(p["title"], int(p["ordinal"]), p["text"])
                for p in payload["passages"]
            ],
            doc_len=[int(n) for n in payload["doc_len"]],
            postings={
                term: [(int(d), int(tf)) for d, tf in plist]
                for term, plist in payload["postings"].items()
            },
            k1=float(payload["k1"]),
            b=float(payload["b"]),
        )


def build_bm25_index(
    passages: Sequence[Passage], k1: float = DEFAULT_K1, b: float = DEFAULT_B
) -> Bm25Index:
    """Tokenize every passage and build the postings lists."""
    if not passages:
        raise ValueError("cannot index an empty passage collection")
    doc_len: list[int] = []
    postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
    for doc_id, passage in enumerate(passages):
        tokens = tokenize(passage.text)
        doc_len.append(len(tokens))
        for term, tf in sorted(Counter(tokens).items()):
            postings[term].append((doc_id, tf))
    return Bm25Index(
        passages=list(passages), doc_len=doc_len, postings=dict(postings), k1=k1, b=b
    )


def format_passage_document(passage: Passage) -> str:
    """Prompt-ready text for a passage: source title line, then the block."""
    return f"{passage.source_title}\n{passage.text}"


def bm25_retrieve(index: Bm25Index, question_text: str, k: int) -> list[RetrievedDocument]:
    """Top-k passages by BM25 score, descending; ties break by doc id.

    score(d) = sum over query terms of
    idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
    with idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)). Repeated query terms
    contribute once per occurrence. Passages sharing no term with the query
    score 0 and are never returned.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    avgdl = index.avgdl
    scores: dict[int, float] = defaultdict(float)
    for term in tokenize(question_text):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for doc_id, tf in plist:
            norm = index.k1 * (1 - index.b + index.b * index.doc_len[doc_id] / avgdl)
            scores[doc_id] += idf * tf * (index.k1 + 1) / (tf + norm)
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:k]
    return [
        RetrievedDocument(
            source_title=index.passages[doc_id].source_title,
            text=format_passage_document(index.passages[doc_id]),
            rank=rank,
            score=score,
        )
        for rank, (doc_id, score) in enumerate(ranked, start=1)
    ]


# ---------------------------------------------------------------------------
# exact dot-product retrieval


@dataclass
class EmbeddingMatrix:
    """Dense passage vectors plus per-question query vectors.

    Vectors come from files; no encoder runs here. Ranking is exact brute
    force over all passages, never approximate.
    """

    dim: int
    passage_ids: list[str]
    passage_vectors: np.ndarray
    question_vectors: dict[str, np.ndarray]

    @classmethod
    def from_files(
        cls, passage_path: Path | str, question_path: Path | str
    ) -> "EmbeddingMatrix":
        p_dim, p_ids, p_vecs = read_embedding_file(passage_path)
        q_dim, q_ids, q_vecs = read_embedding_file(question_path)
        if p_dim != q_dim:
            raise ValueError(
                f"passage vectors have dim {p_dim} but question vectors dim {q_dim}"
            )
        return cls(
            dim=p_dim,
            passage_ids=p_ids,
            passage_vectors=p_vecs,
            question_vectors={qid: q_vecs[i] for i, qid in enumerate(q_ids)},
        )


def read_embedding_file(path: Path | str) -> tuple[int, list[str], np.ndarray]:
    """Parse ``dim=<n>`` header plus ``id<TAB>v1,v2,...`` rows."""
    ids: list[str] = []
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("dim="):
            raise ValueError(f"{path}: missing 'dim=<n>' header, found {header!r}")
        dim = int(header[len("dim=") :])
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                vec_id, values = line.rstrip("\n").split("\t")
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: expected 'id<TAB>values'") from exc
            vector = [float(v) for v in values.split(",")]
            if len(vector) != dim:
                raise ValueError(
                    f"{path}:{line_no}: vector has {len(vector)} values, expected {dim}"
                )
            ids.append(vec_id)
            rows.append(vector)
    matrix = np.asarray(rows, dtype=np.float64).reshape(len(rows), dim)
    return dim, ids, matrix


def dot_product_retrieve(
    emb: EmbeddingMatrix,
    question_id: str,
    k: int,
    passage_lookup: Mapping[str, Passage] | None = None,
) -> list[RetrievedDocument]:
    """Exact top-k passages by dot product, ties broken by ascending id.

    Zero scores are kept (unlike BM25 there is no term-match notion).
    When ``passage_lookup`` maps ids to passages the documents carry real
    text; otherwise the id stands in for the title and the text is empty.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    query = emb.question_vectors.get(question_id)
    if query is None:
        raise KeyError(f"no question vector for {question_id!r}")
    if query.shape[0] != emb.passage_vectors.shape[1]:
        raise ValueError(
            f"question vector dim {query.shape[0]} does not match passage dim "
            f"{emb.passage_vectors.shape[1]}"
        )
    scores = emb.passage_vectors @ query
    order = sorted(range(len(emb.passage_ids)), key=lambda i: (-scores[i], emb.passage_ids[i]))
    docs: list[RetrievedDocument] = []
    for rank, idx in enumerate(order[:k], start=1):
        passage_id = emb.passage_ids[idx]
        passage = passage_lookup.get(passage_id) if passage_lookup else None
        docs.append(
            RetrievedDocument(
                source_title=passage.source_title if passage else passage_id,
                text=format_passage_document(passage) if passage else "",
                rank=rank,
                score=float(scores[idx]),
            )
        )
    return docs


# ---------------------------------------------------------------------------
# uniform retriever objects used by the pipeline


class EntityRetriever:
    def __init__(self, store: CorpusStore, config: RetrieverConfig):
        self.store = store
        self.config = config
        self.missed_entities = 0

    def retrieve(self, question: AnnotatedQuestion) -> list[RetrievedDocument]:
        docs = entity_retrieve(question, self.store, self.config)
        if question.spans:
            wanted = select_first_k_unique(question.spans, self.config.k)
            self.missed_entities += len(wanted) - len(docs)
        return docs


class Bm25Retriever:
    def __init__(self, index: Bm25Index, k: int = DEFAULT_K):
        self.index = index
        self.k = k

    def retrieve(self, question: AnnotatedQuestion) -> list[RetrievedDocument]:
        return bm25_retrieve(self.index, question.text, self.k)


class DotProductRetriever:
    def __init__(
        self,
        emb: EmbeddingMatrix,
        k: int = DEFAULT_K,
        passages: Sequence[Passage] | None = None,
    ):
        self.emb = emb
        self.k = k
        self.passage_lookup = (
            {p.passage_id: p for p in passages} if passages is not None else None
        )

    def retrieve(self, question: AnnotatedQuestion) -> list[RetrievedDocument]:
        return dot_product_retrieve(
            self.emb, question.question_id, self.k, self.passage_lookup
        )


# ---------------------------------------------------------------------------
# retrieval cache


def cache_run_dir(cache_dir: Path | str, run_id: str) -> Path:
    return Path(cache_dir) / run_id


def cache_write(
    cache_dir: Path | str,
    run_id: str,
    results: Mapping[str, Sequence[RetrievedDocument]],
) -> Path:
    """Persist one run's retrieval results; the write replaces atomically.

    One JSON line per question: ``{"question_id", "docs": [{rank, score,
    title, text}]}``. Scores survive the round trip at full precision.
    """
    run_dir = cache_run_dir(cache_dir, run_id)
    run_dir.mkdir(parents=True, exist_ok=True)
    target = run_dir / CACHE_FILENAME
    fd, tmp_name = tempfile.mkstemp(dir=run_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            for question_id, docs in results.items():
                fh.write(
                    json.dumps(
                        {
                            "question_id": question_id,
                            "docs": [doc.to_wire() for doc in docs],
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return target


def cache_read(cache_dir: Path | str, run_id: str) -> dict[str, list[RetrievedDocument]]:
    """Load a run's cached results, value-identical to what was written."""
    target = cache_run_dir(cache_dir, run_id) / CACHE_FILENAME
    if not target.exists():
        raise CacheMissError(f"no retrieval cache for run {run_id!r} under {cache_dir}")
    results: dict[str, list[RetrievedDocument]] = {}
    with open(target, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                results[str(obj["question_id"])] = [
                    RetrievedDocument.from_wire(doc) for doc in obj["docs"]
                ]
            except (ValueError, KeyError, TypeError) as exc:
                raise CacheCorruptError(f"{target}:{line_no}: {exc}") from exc
    return results
