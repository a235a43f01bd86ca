"""Entity-centric retrieval-augmented question answering toolkit."""

from .annotations import (
    AnnotatedQuestion,
    AnnotationStats,
    EntitySpan,
    compute_annotation_stats,
    parse_linker_output,
    select_first_k_unique,
)
from .config import PipelineConfig, load_config
from .corpus import (
    ArticleRecord,
    CorpusStore,
    OffsetEntry,
    Passage,
    build_offset_index,
    normalize_title,
    render_entity_document,
    segment_passages,
    truncate_words,
)
from .metrics import (
    AnswerScore,
    BooleanScore,
    Judgment,
    exact_match,
    judge_relevance,
    mrr,
    ndcg_at_k,
    normalize_text,
    strategyqa_evaluate,
    token_f1,
    topk_retrieval_accuracy,
)
from .prompts import PromptRequest, build_prompt
from .retrievers import (
    Bm25Index,
    EmbeddingMatrix,
    RetrievedDocument,
    RetrieverConfig,
    bm25_retrieve,
    build_bm25_index,
    cache_read,
    cache_write,
    dot_product_retrieve,
    entity_retrieve,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedQuestion",
    "AnnotationStats",
    "AnswerScore",
    "ArticleRecord",
    "Bm25Index",
    "BooleanScore",
    "CorpusStore",
    "EmbeddingMatrix",
    "EntitySpan",
    "Judgment",
    "OffsetEntry",
    "Passage",
    "PipelineConfig",
    "PromptRequest",
    "RetrievedDocument",
    "RetrieverConfig",
    "bm25_retrieve",
    "build_bm25_index",
    "build_offset_index",
    "build_prompt",
    "cache_read",
    "cache_write",
    "compute_annotation_stats",
    "dot_product_retrieve",
    "entity_retrieve",
    "exact_match",
    "judge_relevance",
    "load_config",
    "mrr",
    "ndcg_at_k",
    "normalize_text",
    "normalize_title",
    "parse_linker_output",
    "render_entity_document",
    "segment_passages",
    "select_first_k_unique",
    "strategyqa_evaluate",
    "token_f1",
    "topk_retrieval_accuracy",
    "truncate_words",
]
