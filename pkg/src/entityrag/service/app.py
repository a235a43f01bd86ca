"""FastAPI service wrapping the retrieval toolkit.

Interactive endpoints answer single questions against resources loaded
once and kept warm (the point of a long-running retrieval process: index
loading is paid at startup, not per query). Pipeline endpoints run the
batch stages server side; the CLI is a thin client for both groups.

The service also hosts ``POST /llm/generate``, a deterministic stub reader
implementing the same wire contract a real reader deployment would, so a
full retrieve-and-answer loop can run with no model anywhere.
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse

from ..annotations import AnnotatedQuestion, SpanError, parse_linker_output
from ..config import ConfigError, PipelineConfig
from ..corpus import CorpusError, CorpusStore, build_offset_index, segment_dump, truncate_words
from ..llm import LlmError, StubLlm, make_client
from ..pipeline import (
    EXCHANGES_FILENAME,
    REPORT_JSON_FILENAME,
    REPORT_TXT_FILENAME,
    DatasetFormatError,
    annotation_stats,
    bench_retrievers,
    evaluate_run,
    format_bench_table,
    load_exchanges,
    load_questions,
    run_qa_stage,
    run_retrieval_stage,
)
from ..prompts import PromptRequest, build_prompt
from ..retrievers import (
    Bm25Index,
    CacheMissError,
    RetrieverConfig,
    bm25_retrieve,
    cache_read,
    cache_run_dir,
    dot_product_retrieve,
    entity_retrieve,
)
from . import schemas

_BAD_REQUEST_ERRORS = (
    ConfigError,
    CorpusError,
    DatasetFormatError,
    SpanError,
    ValueError,
    KeyError,
    FileNotFoundError,
)


class ServiceState:
    """Per-application resources, loaded lazily and shared across requests."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self._lock = threading.Lock()
        self._store: CorpusStore | None = None
        self._bm25 = None
        self._emb = None
        self._passage_lookup = None
        self._answer_key: dict[str, list[str]] | None = None

    def store(self) -> CorpusStore:
        with self._lock:
            if self._store is None:
                if self.config.dump_path is None:
                    raise HTTPException(503, "corpus is not configured on this server")
                self._store = CorpusStore(
                    self.config.dump_path,
                    index_path=self.config.offset_index_path,
                    alias_path=self.config.alias_path,
                )
            return self._store

    def bm25(self):
        with self._lock:
            if self._bm25 is None:
                config = self.config
                if config.bm25_index_path is not None and config.bm25_index_path.exists():
                    self._bm25 = Bm25Index.load(config.bm25_index_path)
                elif config.passages_path is not None:
                    from ..corpus import load_passages
                    from ..retrievers import build_bm25_index

                    self._bm25 = build_bm25_index(
                        load_passages(config.passages_path),
                        k1=config.bm25_k1,
                        b=config.bm25_b,
                    )
                else:
                    raise HTTPException(503, "no BM25 index is configured on this server")
            return self._bm25

    def embeddings(self):
        with self._lock:
            if self._emb is None:
                config = self.config
                if (
                    config.passage_embeddings_path is None
                    or config.question_embeddings_path is None
                ):
                    raise HTTPException(503, "no embeddings are configured on this server")
                from ..retrievers import EmbeddingMatrix

                self._emb = EmbeddingMatrix.from_files(
                    config.passage_embeddings_path, config.question_embeddings_path
                )
                if config.passages_path is not None:
                    from ..corpus import load_passages

                    self._passage_lookup = {
                        p.passage_id: p for p in load_passages(config.passages_path)
                    }
            return self._emb

    def answer_key(self) -> dict[str, list[str]]:
        with self._lock:
            if self._answer_key is None:
                if self.config.dataset_path is not None:
                    questions = load_questions(self.config)
                    self._answer_key = {q.text: q.gold_strings() for q in questions}
                else:
                    self._answer_key = {}
            return self._answer_key

    def stub(self) -> StubLlm:
        if self.config.llm_endpoint == "stub:oracle":
            return StubLlm(mode="oracle", answer_key=self.answer_key())
        return StubLlm(mode="echo")

    def close(self) -> None:
        if self._store is not None:
            self._store.close()
            self._store = None


def create_app(config: PipelineConfig | None = None) -> FastAPI:
    state = ServiceState(config or PipelineConfig())

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        state.close()

    app = FastAPI(
        title="entityrag",
        description=(
            "Entity-centric retrieval-augmented QA: article lookup, three "
            "retrieval backends, prompt construction, a stub reader endpoint, "
            "and the batch pipeline stages."
        ),
        lifespan=lifespan,
    )
    app.state.service = state

    @app.exception_handler(CacheMissError)
    async def _cache_miss(request: Request, exc: CacheMissError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    for error_type in _BAD_REQUEST_ERRORS:

        @app.exception_handler(error_type)
        async def _bad_request(request: Request, exc: Exception):
            return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(
            status="ok",
            corpus_articles=len(state._store) if state._store is not None else None,
            bm25_passages=state._bm25.n_docs if state._bm25 is not None else None,
            embedding_passages=(
                len(state._emb.passage_ids) if state._emb is not None else None
            ),
        )

    @app.get("/articles/{title}", response_model=schemas.ArticleResponse)
    def get_article(
        title: str, truncate: int | None = Query(default=None, ge=1)
    ) -> schemas.ArticleResponse:
        article = state.store().lookup_article(title)
        if article is None:
            raise HTTPException(404, f"no article titled {title!r}")
        body = truncate_words(article.body, truncate) if truncate else article.body
        return schemas.ArticleResponse(title=article.title, body=body)

    def _retrieve_docs(request: schemas.RetrieveRequest):
        kind = request.retriever or state.config.retriever.kind
        rconfig = RetrieverConfig(
            kind=kind,
            k=request.k or state.config.retriever.k,
            truncate_words=request.truncate_words
            or state.config.retriever.truncate_words,
        )
        spans = parse_linker_output(
            [(s.begin, s.end, s.entity) for s in request.spans], request.question
        )
        question = AnnotatedQuestion(
            question_id=request.question_id, text=request.question, spans=spans
        )
        if kind == "entity":
            docs = entity_retrieve(question, state.store(), rconfig)
        elif kind == "bm25":
            docs = bm25_retrieve(state.bm25(), question.text, rconfig.k)
        elif kind == "dot_product":
            state.embeddings()
            docs = dot_product_retrieve(
                state._emb, question.question_id, rconfig.k, state._passage_lookup
            )
        else:
            raise HTTPException(400, f"unknown retriever kind {kind!r}")
        return kind, docs

    @app.post("/retrieve", response_model=schemas.RetrieveResponse)
    def retrieve(request: schemas.RetrieveRequest) -> schemas.RetrieveResponse:
        kind, docs = _retrieve_docs(request)
        return schemas.RetrieveResponse(
            question_id=request.question_id,
            retriever=kind,
            documents=[schemas.DocumentModel(**doc.to_wire()) for doc in docs],
        )

    @app.post("/prompt", response_model=schemas.PromptBuildResponse)
    def prompt(request: schemas.PromptBuildRequest) -> schemas.PromptBuildResponse:
        text = build_prompt(
            PromptRequest(question=request.question, documents=list(request.documents))
        )
        return schemas.PromptBuildResponse(prompt=text)

    @app.post("/llm/generate", response_model=schemas.GenerateResponse)
    def llm_generate(request: schemas.GenerateRequest) -> schemas.GenerateResponse:
        text = state.stub().generate(request.prompt, request.max_tokens)
        return schemas.GenerateResponse(text=text)

    @app.post("/answer", response_model=schemas.AnswerResponse)
    def answer(request: schemas.AnswerRequest) -> schemas.AnswerResponse:
        _, docs = _retrieve_docs(request)
        prompt_text = build_prompt(
            PromptRequest(
                question=request.question.strip(),
                documents=[doc.text for doc in docs],
                max_generation_tokens=request.max_tokens,
            )
        )
        client = make_client(
            state.config.llm_endpoint,
            answer_key=state.answer_key(),
            timeout=state.config.llm_timeout_s,
            max_attempts=state.config.llm_max_attempts,
        )
        try:
            text = client.generate(prompt_text, request.max_tokens)
        except LlmError as exc:
            raise HTTPException(502, f"reader endpoint failed: {exc}") from exc
        return schemas.AnswerResponse(
            question=request.question,
            answer=text,
            prompt=prompt_text,
            documents=[schemas.DocumentModel(**doc.to_wire()) for doc in docs],
        )

    # ------------------------------------------------------------------
    # batch pipeline endpoints

    @app.post("/pipeline/build-index", response_model=schemas.BuildIndexResponse)
    def pipeline_build_index(
        request: schemas.BuildIndexRequest,
    ) -> schemas.BuildIndexResponse:
        from ..corpus import default_index_path

        index_path = request.index_path or str(default_index_path(request.dump_path))
        _, stats = build_offset_index(request.dump_path, index_path)
        return schemas.BuildIndexResponse(
            articles=stats.article_count,
            total_bytes=stats.total_bytes,
            index_path=index_path,
        )

    @app.post("/pipeline/segment", response_model=schemas.SegmentResponse)
    def pipeline_segment(request: schemas.SegmentRequest) -> schemas.SegmentResponse:
        articles, passages = segment_dump(
            request.dump_path, request.passages_path, request.segment_len
        )
        return schemas.SegmentResponse(
            articles=articles, passages=passages, passages_path=request.passages_path
        )

    def _config_of(request: schemas.PipelineRunRequest) -> PipelineConfig:
        return PipelineConfig.from_mapping(request.config)

    @app.post("/pipeline/retrieve", response_model=schemas.RetrieveRunResponse)
    def pipeline_retrieve(
        request: schemas.PipelineRunRequest,
    ) -> schemas.RetrieveRunResponse:
        result = run_retrieval_stage(_config_of(request))
        return schemas.RetrieveRunResponse(
            run_id=result.run_id,
            n_questions=result.n_questions,
            n_documents=result.n_documents,
            missed_entities=result.missed_entities,
            duration_s=result.duration_s,
            cache_path=str(result.cache_path),
        )

    @app.post("/pipeline/ask", response_model=schemas.AskRunResponse)
    def pipeline_ask(request: schemas.PipelineRunRequest) -> schemas.AskRunResponse:
        result = run_qa_stage(_config_of(request))
        return schemas.AskRunResponse(
            run_id=result.run_id,
            n_questions=len(result.exchanges),
            n_failed=result.n_failed,
            duration_s=result.duration_s,
            exchanges_path=str(result.exchanges_path),
        )

    @app.post("/pipeline/evaluate", response_model=schemas.EvaluateResponse)
    def pipeline_evaluate(
        request: schemas.PipelineRunRequest,
    ) -> schemas.EvaluateResponse:
        config = _config_of(request)
        questions = load_questions(config)
        cache = cache_read(config.run_cache_dir, config.run_id)
        run_dir = cache_run_dir(config.run_cache_dir, config.run_id)
        exchanges = load_exchanges(run_dir / EXCHANGES_FILENAME)
        report = evaluate_run(exchanges, cache, questions, config)
        return schemas.EvaluateResponse(
            run_id=config.run_id,
            metrics=report.metrics,
            report_json_path=str(run_dir / REPORT_JSON_FILENAME),
            report_txt_path=str(run_dir / REPORT_TXT_FILENAME),
        )

    @app.post("/pipeline/stats", response_model=schemas.StatsResponse)
    def pipeline_stats(request: schemas.PipelineRunRequest) -> schemas.StatsResponse:
        stats, n_questions = annotation_stats(_config_of(request))
        return schemas.StatsResponse(
            n_questions=n_questions,
            max_entities=stats.max_entities,
            avg_entities=stats.avg_entities,
            linked_fraction=stats.linked_fraction,
        )

    @app.post("/pipeline/bench", response_model=schemas.BenchResponse)
    def pipeline_bench(request: schemas.BenchRequest) -> schemas.BenchResponse:
        config = _config_of(request)
        rows = bench_retrievers(config, request.retrievers)
        return schemas.BenchResponse(
            rows=[
                schemas.BenchRowModel(
                    retriever=row.retriever,
                    total_time_s=row.total_time_s,
                    disk_bytes=row.disk_bytes,
                    peak_rss_bytes=row.peak_rss_bytes,
                )
                for row in rows
            ],
            table=format_bench_table(rows),
        )

    return app
