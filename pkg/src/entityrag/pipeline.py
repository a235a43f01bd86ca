"""Two-stage retrieve-then-answer pipeline with evaluation and benchmarking.

Document retrieval runs as a pre-processing stage that caches every
question's documents; the answering stage replays prompts from the cache
against a reader client. Evaluation joins dataset, cache and exchanges by
question id. A separate benchmark harness measures each retriever's
query-time cost with index loading excluded.
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .annotations import (
    AnnotatedQuestion,
    AnnotationStats,
    apply_annotations,
    compute_annotation_stats,
    load_annotation_file,
    parse_linker_output,
)
from .config import ConfigError, PipelineConfig
from .corpus import CorpusStore, load_passages
from .llm import LlmClient, LlmError, LlmExchange, make_client
from .metrics import (
    AnswerScore,
    BooleanScore,
    Judgment,
    judge_relevance,
    metric_report,
    parse_boolean_answer,
    score_answer,
    strategyqa_evaluate,
)
from .prompts import PromptRequest, build_prompt
from .retrievers import (
    Bm25Index,
    Bm25Retriever,
    DotProductRetriever,
    EmbeddingMatrix,
    EntityRetriever,
    RetrieverConfig,
    build_bm25_index,
    cache_read,
    cache_run_dir,
    cache_write,
)

EXCHANGES_FILENAME = "exchanges.jsonl"
RETRIEVAL_META_FILENAME = "retrieval_meta.json"
QA_META_FILENAME = "qa_meta.json"
REPORT_JSON_FILENAME = "report.json"
REPORT_TXT_FILENAME = "report.txt"


class DatasetFormatError(ValueError):
    """A questions file line violates the schema."""

    def __init__(self, path: Path | str, line_no: int, reason: str):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{path}:{line_no}: {reason}")


# ---------------------------------------------------------------------------
# dataset ingestion


def ingest_dataset(path: Path | str, kind: str) -> list[AnnotatedQuestion]:
    """Load a JSONL questions file into annotated questions.

    Factoid records need a non-empty ``answers`` list; strategyqa records a
    boolean ``answer``. Inline ``spans`` are validated against the question
    text.
    """
    if kind not in ("factoid", "entity_questions", "strategyqa"):
        raise ConfigError(f"unknown dataset kind {kind!r}")
    questions: list[AnnotatedQuestion] = []
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise DatasetFormatError(path, line_no, f"invalid JSON: {exc}") from exc
            try:
                question_id = str(obj["question_id"])
                text = obj["question"]
            except KeyError as exc:
                raise DatasetFormatError(path, line_no, f"missing field {exc}") from exc
            if not isinstance(text, str) or not text.strip():
                raise DatasetFormatError(path, line_no, "empty question text")
            if question_id in seen_ids:
                raise DatasetFormatError(path, line_no, f"duplicate id {question_id!r}")
            seen_ids.add(question_id)

            answers: list[str] = []
            answer_bool: bool | None = None
            if kind == "strategyqa":
                if not isinstance(obj.get("answer"), bool):
                    raise DatasetFormatError(path, line_no, "expected boolean 'answer'")
                answer_bool = obj["answer"]
            else:
                answers = obj.get("answers") or []
                if not answers or not all(isinstance(a, str) and a for a in answers):
                    raise DatasetFormatError(
                        path, line_no, "expected non-empty 'answers' list"
                    )
            try:
                spans = parse_linker_output(obj.get("spans", []), text)
            except ValueError as exc:
                raise DatasetFormatError(path, line_no, str(exc)) from exc
            questions.append(
                AnnotatedQuestion(
                    question_id=question_id,
                    text=text,
                    answers=list(answers),
                    answer_bool=answer_bool,
                    spans=spans,
                )
            )
    return questions


def load_questions(config: PipelineConfig) -> list[AnnotatedQuestion]:
    """Ingest the configured dataset; an annotations file replaces inline spans."""
    if config.dataset_path is None:
        raise ConfigError("dataset_path is not configured")
    questions = ingest_dataset(config.dataset_path, config.dataset_kind)
    if config.annotations_path is not None:
        apply_annotations(questions, load_annotation_file(config.annotations_path))
    return questions


def annotation_stats(config: PipelineConfig) -> tuple[AnnotationStats, int]:
    questions = load_questions(config)
    return compute_annotation_stats(questions), len(questions)


# ---------------------------------------------------------------------------
# retriever loading


@dataclass
class LoadedRetriever:
    """A ready-to-query retriever plus its on-disk footprint."""

    name: str
    retriever: object
    disk_bytes: int
    store: CorpusStore | None = None

    def retrieve(self, question: AnnotatedQuestion):
        return self.retriever.retrieve(question)

    def close(self) -> None:
        if self.store is not None:
            self.store.close()


def _existing_size(path: Path | None) -> int:
    return path.stat().st_size if path is not None and path.exists() else 0


def build_retriever(
    config: PipelineConfig, kind: str | None = None
) -> LoadedRetriever:
    """Load the resources one retriever needs and wrap it for querying.

    Disk accounting covers the artifacts each method must keep on disk:
    the dump plus offset index for entity retrieval, the serialized index
    (or the passages file it would be built from) for BM25, and the
    embedding plus passages files for dot-product retrieval.
    """
    kind = kind or config.retriever.kind
    rconfig = RetrieverConfig(
        kind=kind, k=config.retriever.k, truncate_words=config.retriever.truncate_words
    )
    if kind == "entity":
        if config.dump_path is None:
            raise ConfigError("entity retrieval requires dump_path")
        store = CorpusStore(
            config.dump_path,
            index_path=config.offset_index_path,
            alias_path=config.alias_path,
        )
        return LoadedRetriever(
            name="entity",
            retriever=EntityRetriever(store, rconfig),
            disk_bytes=store.disk_bytes(),
            store=store,
        )
    if kind == "bm25":
        if config.bm25_index_path is not None and config.bm25_index_path.exists():
            index = Bm25Index.load(config.bm25_index_path)
            disk = config.bm25_index_path.stat().st_size
        elif config.passages_path is not None:
            index = build_bm25_index(
                load_passages(config.passages_path), k1=config.bm25_k1, b=config.bm25_b
            )
            disk = config.passages_path.stat().st_size
            if config.bm25_index_path is not None:
                index.save(config.bm25_index_path)
                disk = config.bm25_index_path.stat().st_size
        else:
            raise ConfigError("bm25 retrieval requires bm25_index_path or passages_path")
        return LoadedRetriever(
            name="bm25", retriever=Bm25Retriever(index, k=rconfig.k), disk_bytes=disk
        )
    if kind == "dot_product":
        if config.passage_embeddings_path is None or config.question_embeddings_path is None:
            raise ConfigError(
                "dot_product retrieval requires passage_embeddings_path and "
                "question_embeddings_path"
            )
        emb = EmbeddingMatrix.from_files(
            config.passage_embeddings_path, config.question_embeddings_path
        )
        passages = (
            load_passages(config.passages_path)
            if config.passages_path is not None
            else None
        )
        disk = (
            config.passage_embeddings_path.stat().st_size
            + config.question_embeddings_path.stat().st_size
            + _existing_size(config.passages_path)
        )
        return LoadedRetriever(
            name="dot_product",
            retriever=DotProductRetriever(emb, k=rconfig.k, passages=passages),
            disk_bytes=disk,
        )
    raise ConfigError(f"unknown retriever kind {kind!r}")


# ---------------------------------------------------------------------------
# resident-memory sampling


def _read_rss_bytes() -> int:
    try:
        with open("/proc/self/status", "r") as fh:
            for line in fh:
                if line.startswith("VmRSS:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    import resource

    # Fallback: process-lifetime peak, coarser than sampling but monotone.
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


class RssSampler:
    """Samples resident set size on a timer; peak is the maximum sample."""

    def __init__(self, interval_s: float = 0.05):
        self.interval_s = interval_s
        self.peak_bytes = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def __enter__(self) -> "RssSampler":
        self.peak_bytes = _read_rss_bytes()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def _run(self) -> None:
        while not self._stop.wait(self.interval_s):
            self.peak_bytes = max(self.peak_bytes, _read_rss_bytes())

    def __exit__(self, *exc_info) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        self.peak_bytes = max(self.peak_bytes, _read_rss_bytes())


# ---------------------------------------------------------------------------
# retrieval stage


@dataclass
class RetrievalStageResult:
    run_id: str
    cache_path: Path
    n_questions: int
    n_documents: int
    missed_entities: int
    duration_s: float
    peak_rss_bytes: int
    index_disk_bytes: int


def run_retrieval_stage(
    config: PipelineConfig, questions: Sequence[AnnotatedQuestion] | None = None
) -> RetrievalStageResult:
    """Retrieve documents for every question and cache them atomically.

    Rerunning with the same configuration overwrites the cache in place;
    readers never observe a partial file.
    """
    if questions is None:
        questions = load_questions(config)
    loaded = build_retriever(config)
    try:
        results: dict[str, list] = {}
        with RssSampler() as sampler:
            started = time.perf_counter()
            for question in questions:
                results[question.question_id] = loaded.retrieve(question)
            duration = time.perf_counter() - started
        cache_path = cache_write(config.run_cache_dir, config.run_id, results)
    finally:
        loaded.close()
    missed = getattr(loaded.retriever, "missed_entities", 0)
    result = RetrievalStageResult(
        run_id=config.run_id,
        cache_path=cache_path,
        n_questions=len(questions),
        n_documents=sum(len(docs) for docs in results.values()),
        missed_entities=missed,
        duration_s=duration,
        peak_rss_bytes=sampler.peak_bytes,
        index_disk_bytes=loaded.disk_bytes,
    )
    _write_json(
        cache_run_dir(config.run_cache_dir, config.run_id) / RETRIEVAL_META_FILENAME,
        {
            "retriever": loaded.name,
            "n_questions": result.n_questions,
            "n_documents": result.n_documents,
            "missed_entities": result.missed_entities,
            "duration_s": result.duration_s,
            "peak_rss_bytes": result.peak_rss_bytes,
            "index_disk_bytes": result.index_disk_bytes,
        },
    )
    return result


# ---------------------------------------------------------------------------
# answering stage


@dataclass
class QaStageResult:
    run_id: str
    exchanges: list[LlmExchange]
    exchanges_path: Path
    n_failed: int
    duration_s: float


def run_qa_stage(
    config: PipelineConfig,
    questions: Sequence[AnnotatedQuestion] | None = None,
    cache: dict[str, list] | None = None,
    client: LlmClient | None = None,
) -> QaStageResult:
    """Build a prompt per question from the cache and call the reader.

    Calls run concurrently up to ``llm_concurrency``; results keep dataset
    order. A question whose reader call fails after the client's retries is
    recorded with an error marker, never dropped.
    """
    if questions is None:
        questions = load_questions(config)
    if cache is None:
        cache = cache_read(config.run_cache_dir, config.run_id)
    if client is None:
        client = make_client(
            config.llm_endpoint,
            answer_key={q.text: q.gold_strings() for q in questions},
            timeout=config.llm_timeout_s,
            max_attempts=config.llm_max_attempts,
        )
    max_tokens = config.generation_tokens

    def ask(question: AnnotatedQuestion) -> LlmExchange:
        docs = cache.get(question.question_id)
        if docs is None:
            raise KeyError(
                f"question {question.question_id!r} missing from retrieval cache; "
                "run the retrieval stage first"
            )
        prompt = build_prompt(
            PromptRequest(
                question=question.text.strip(),
                documents=[doc.text for doc in docs],
                max_generation_tokens=max_tokens,
            )
        )
        started = time.perf_counter()
        try:
            response = client.generate(prompt, max_tokens)
            error = None
        except LlmError as exc:
            response = ""
            error = str(exc)
        latency_ms = (time.perf_counter() - started) * 1000
        return LlmExchange(
            question_id=question.question_id,
            prompt=prompt,
            max_tokens=max_tokens,
            response=response,
            latency_ms=latency_ms,
            error=error,
        )

    started = time.perf_counter()
    workers = max(1, config.llm_concurrency)
    if workers == 1:
        exchanges = [ask(q) for q in questions]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            exchanges = list(pool.map(ask, questions))
    duration = time.perf_counter() - started

    run_dir = cache_run_dir(config.run_cache_dir, config.run_id)
    run_dir.mkdir(parents=True, exist_ok=True)
    exchanges_path = run_dir / EXCHANGES_FILENAME
    write_exchanges(exchanges, exchanges_path)
    n_failed = sum(1 for e in exchanges if e.failed)
    _write_json(
        run_dir / QA_META_FILENAME,
        {
            "n_questions": len(exchanges),
            "n_failed": n_failed,
            "max_tokens": max_tokens,
            "duration_s": duration,
        },
    )
    return QaStageResult(
        run_id=config.run_id,
        exchanges=exchanges,
        exchanges_path=exchanges_path,
        n_failed=n_failed,
        duration_s=duration,
    )


def write_exchanges(exchanges: Sequence[LlmExchange], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for exchange in exchanges:
            fh.write(
                json.dumps(
                    {
                        "question_id": exchange.question_id,
                        "prompt": exchange.prompt,
                        "max_tokens": exchange.max_tokens,
                        "response": exchange.response,
                        "latency_ms": exchange.latency_ms,
                        "error": exchange.error,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_exchanges(path: Path | str) -> list[LlmExchange]:
    exchanges: list[LlmExchange] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            exchanges.append(
                LlmExchange(
                    question_id=obj["question_id"],
                    prompt=obj["prompt"],
                    max_tokens=int(obj["max_tokens"]),
                    response=obj["response"],
                    latency_ms=float(obj["latency_ms"]),
                    error=obj.get("error"),
                )
            )
    return exchanges


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class RunReport:
    """Everything reported for one run: metrics, resources, per-question rows."""

    run_id: str
    dataset_kind: str
    retriever: dict
    metrics: dict
    resources: dict = field(default_factory=dict)
    per_question: list[dict] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "run_id": self.run_id,
            "dataset_kind": self.dataset_kind,
            "retriever": self.retriever,
            "metrics": self.metrics,
            "resources": self.resources,
            "per_question": self.per_question,
        }


def evaluate_run(
    exchanges: Sequence[LlmExchange],
    cache: dict[str, list],
    questions: Sequence[AnnotatedQuestion],
    config: PipelineConfig,
) -> RunReport:
    """Join exchanges, cache and questions by id and compute all metrics.

    Factoid datasets get ranking metrics plus EM/F1; boolean datasets get
    accuracy and the invalid-answer count (their yes/no labels are not
    meaningful relevance targets, so the ranking block is omitted). The
    report is written to the run directory as JSON plus a fixed-width text
    table.
    """
    exchange_by_id = {e.question_id: e for e in exchanges}
    for question in questions:
        if question.question_id not in cache:
            raise ValueError(f"question {question.question_id!r} missing from cache")
        if question.question_id not in exchange_by_id:
            raise ValueError(f"question {question.question_id!r} missing from exchanges")

    k = config.retriever.k
    per_question: list[dict] = []
    judgments: list[Judgment] | None = None
    answer_scores: list[AnswerScore] | None = None
    boolean_score: BooleanScore | None = None

    if config.dataset_kind == "strategyqa":
        predictions = []
        for question in questions:
            exchange = exchange_by_id[question.question_id]
            prediction = "" if exchange.failed else exchange.response
            predictions.append(prediction)
            parsed = parse_boolean_answer(prediction)
            per_question.append(
                {
                    "question_id": question.question_id,
                    "prediction": exchange.response,
                    "parsed_label": parsed,
                    "correct": parsed is not None and parsed == question.answer_bool,
                    "failed": exchange.failed,
                }
            )
        boolean_score = strategyqa_evaluate(
            predictions, [bool(q.answer_bool) for q in questions]
        )
    else:
        judgments = []
        answer_scores = []
        for question in questions:
            exchange = exchange_by_id[question.question_id]
            golds = question.gold_strings()
            flags = tuple(
                judge_relevance(doc.text, golds) for doc in cache[question.question_id]
            )
            judgments.append(Judgment(question.question_id, flags))
            if exchange.failed:
                score = AnswerScore(em=0, f1=0.0)
            else:
                score = score_answer(exchange.response, golds)
            answer_scores.append(score)
            per_question.append(
                {
                    "question_id": question.question_id,
                    "prediction": exchange.response,
                    "em": score.em,
                    "f1": score.f1,
                    "relevance_flags": list(flags),
                    "failed": exchange.failed,
                }
            )

    metrics = metric_report(
        k=k,
        judgments=judgments,
        answer_scores=answer_scores,
        boolean_score=boolean_score,
        n_questions=len(questions),
    )
    report = RunReport(
        run_id=config.run_id,
        dataset_kind=config.dataset_kind,
        retriever={
            "kind": config.retriever.kind,
            "k": k,
            "truncate_words": config.retriever.truncate_words,
        },
        metrics=metrics,
        resources=_collect_resources(config),
        per_question=per_question,
    )
    write_report(report, cache_run_dir(config.run_cache_dir, config.run_id))
    return report


def _collect_resources(config: PipelineConfig) -> dict:
    resources: dict = {}
    run_dir = cache_run_dir(config.run_cache_dir, config.run_id)
    retrieval_meta = _read_json(run_dir / RETRIEVAL_META_FILENAME)
    if retrieval_meta:
        resources["retrieval_s"] = retrieval_meta.get("duration_s")
        resources["peak_rss_bytes"] = retrieval_meta.get("peak_rss_bytes")
        resources["index_disk_bytes"] = retrieval_meta.get("index_disk_bytes")
        resources["missed_entities"] = retrieval_meta.get("missed_entities")
    qa_meta = _read_json(run_dir / QA_META_FILENAME)
    if qa_meta:
        resources["answering_s"] = qa_meta.get("duration_s")
        resources["n_failed"] = qa_meta.get("n_failed")
    return resources


RATE_FIELDS = ("em", "f1", "accuracy")


def format_report_table(report: RunReport) -> str:
    """Fixed-width two-column rendering of the metric and resource blocks."""
    rows: list[tuple[str, str]] = [
        ("run_id", report.run_id),
        ("dataset_kind", report.dataset_kind),
        ("retriever", report.retriever["kind"]),
        ("k", str(report.retriever["k"])),
    ]
    for name, value in report.metrics.items():
        if name in RATE_FIELDS or name.endswith("_accuracy"):
            rows.append((name, f"{value * 100:.2f}%"))
        elif isinstance(value, float):
            rows.append((name, f"{value:.4f}"))
        else:
            rows.append((name, str(value)))
    for name, value in report.resources.items():
        if isinstance(value, float):
            rows.append((name, f"{value:.3f}"))
        else:
            rows.append((name, str(value)))
    width = max(len(name) for name, _ in rows)
    lines = [f"{name:<{width}}  {value}" for name, value in rows]
    return "\n".join(lines) + "\n"


def write_report(report: RunReport, run_dir: Path) -> tuple[Path, Path]:
    run_dir.mkdir(parents=True, exist_ok=True)
    json_path = run_dir / REPORT_JSON_FILENAME
    txt_path = run_dir / REPORT_TXT_FILENAME
    with open(json_path, "w", encoding="utf-8", newline="") as fh:
        json.dump(report.to_json_obj(), fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    with open(txt_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_report_table(report))
    return json_path, txt_path


# ---------------------------------------------------------------------------
# retriever resource benchmark


@dataclass
class BenchRow:
    retriever: str
    total_time_s: float
    disk_bytes: int
    peak_rss_bytes: int


def bench_retrievers(
    config: PipelineConfig,
    kinds: Sequence[str],
    questions: Sequence[AnnotatedQuestion] | None = None,
) -> list[BenchRow]:
    """Measure query time, disk footprint and peak memory per retriever.

    Resources are loaded before the clock starts, so reported times cover
    only the per-question retrieval work.
    """
    if questions is None:
        questions = load_questions(config)
    rows: list[BenchRow] = []
    for kind in kinds:
        loaded = build_retriever(config, kind=kind)
        try:
            with RssSampler() as sampler:
                started = time.perf_counter()
                for question in questions:
                    loaded.retrieve(question)
                duration = time.perf_counter() - started
        finally:
            loaded.close()
        rows.append(
            BenchRow(
                retriever=loaded.name,
                total_time_s=duration,
                disk_bytes=loaded.disk_bytes,
                peak_rss_bytes=sampler.peak_bytes,
            )
        )
    return rows


def format_bench_table(rows: Sequence[BenchRow]) -> str:
    """One row per retriever: total time, disk storage, main memory."""
    header = ("retriever", "total_time_s", "disk_bytes", "peak_rss_bytes")
    cells = [header] + [
        (
            row.retriever,
            f"{row.total_time_s:.3f}",
            str(row.disk_bytes),
            str(row.peak_rss_bytes),
        )
        for row in rows
    ]
    widths = [max(len(row[col]) for row in cells) for col in range(len(header))]
    lines = [
        "  ".join(f"{cell:<{width}}" for cell, width in zip(row, widths)).rstrip()
        for row in cells
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# small JSON helpers


def _write_json(path: Path, obj: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def _read_json(path: Path) -> dict | None:
    if not path.exists():
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
