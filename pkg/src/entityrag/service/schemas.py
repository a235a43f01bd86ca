"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    corpus_articles: int | None = None
    bm25_passages: int | None = None
    embedding_passages: int | None = None


class ArticleResponse(BaseModel):
    title: str
    body: str


class SpanModel(BaseModel):
    begin: int
    end: int
    entity: str


class DocumentModel(BaseModel):
    rank: int
    score: float
    title: str
    text: str


class RetrieveRequest(BaseModel):
    question: str
    question_id: str = "q"
    spans: list[SpanModel] = Field(default_factory=list)
    retriever: str | None = None
    k: int | None = Field(None, ge=1)
    truncate_words: int | None = Field(None, ge=1)


class RetrieveResponse(BaseModel):
    question_id: str
    retriever: str
    documents: list[DocumentModel]


class PromptBuildRequest(BaseModel):
    question: str
    documents: list[str] = Field(default_factory=list)


class PromptBuildResponse(BaseModel):
    prompt: str


class GenerateRequest(BaseModel):
    prompt: str
    max_tokens: int = Field(10, ge=1)


class GenerateResponse(BaseModel):
    text: str


class AnswerRequest(RetrieveRequest):
    max_tokens: int = Field(10, ge=1)


class AnswerResponse(BaseModel):
    question: str
    answer: str
    prompt: str
    documents: list[DocumentModel]


class BuildIndexRequest(BaseModel):
    dump_path: str
    index_path: str | None = None


class BuildIndexResponse(BaseModel):
    articles: int
    total_bytes: int
    index_path: str


class SegmentRequest(BaseModel):
    dump_path: str
    passages_path: str
    segment_len: int = Field(100, ge=1)


class SegmentResponse(BaseModel):
    articles: int
    passages: int
    passages_path: str


class PipelineRunRequest(BaseModel):
    """Flat config mapping, same keys as the ``key = value`` config file."""

    config: dict[str, str] = Field(default_factory=dict)


class RetrieveRunResponse(BaseModel):
    run_id: str
    n_questions: int
    n_documents: int
    missed_entities: int
    duration_s: float
    cache_path: str


class AskRunResponse(BaseModel):
    run_id: str
    n_questions: int
    n_failed: int
    duration_s: float
    exchanges_path: str


class EvaluateResponse(BaseModel):
    run_id: str
    metrics: dict
    report_json_path: str
    report_txt_path: str


class StatsResponse(BaseModel):
    n_questions: int
    max_entities: int
    avg_entities: float
    linked_fraction: float


class BenchRequest(PipelineRunRequest):
    retrievers: list[str] = Field(default_factory=lambda: ["entity"])


class BenchRowModel(BaseModel):
    retriever: str
    total_time_s: float
    disk_bytes: int
    peak_rss_bytes: int


class BenchResponse(BaseModel):
    rows: list[BenchRowModel]
    table: str
