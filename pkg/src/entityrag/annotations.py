"""Question entity annotations and aggregate annotation statistics.

Annotations may come from gold labels shipped with a dataset or from an
entity linker; both are reduced to the same span form, so everything
downstream is source agnostic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import normalize_title


class SpanError(ValueError):
    """A linker record violates the span contract."""


@dataclass(frozen=True, order=True)
class EntitySpan:
    """Character span of one entity mention in a question.

    ``begin_char`` is inclusive, ``end_char`` exclusive; ``entity`` is a
    normalized knowledge-base title.
    """

    begin_char: int
    end_char: int
    entity: str


@dataclass
class AnnotatedQuestion:
    """A question with gold answers and its entity spans.

    Factoid questions carry one or more answer strings; boolean questions
    carry ``answer_bool`` instead. Spans are kept sorted by begin offset.
    """

    question_id: str
    text: str
    answers: list[str] = field(default_factory=list)
    answer_bool: bool | None = None
    spans: list[EntitySpan] = field(default_factory=list)

    def gold_strings(self) -> list[str]:
        """Answers as strings, mapping booleans to Yes/No."""
        if self.answer_bool is not None:
            return ["Yes"] if self.answer_bool else ["No"]
        return list(self.answers)


@dataclass(frozen=True)
class AnnotationStats:
    max_entities: int
    avg_entities: float
    linked_fraction: float


def parse_linker_output(
    raw: Iterable[Sequence | Mapping], question_text: str
) -> list[EntitySpan]:
    """Convert raw linker records into validated, ordered spans.

    Each record is a ``(begin, end, entity)`` sequence or a mapping with
    those keys. Output is sorted by (begin, end, entity) so an unordered
    linker response still yields a deterministic sequence; exact duplicate
    records collapse to one span. Records violating the span contract
    raise :class:`SpanError`.
    """
    spans: set[EntitySpan] = set()
    for record in raw:
        if isinstance(record, Mapping):
            begin, end, entity = record["begin"], record["end"], record["entity"]
        else:
            begin, end, entity = record
        begin, end = int(begin), int(end)
        if begin >= end:
            raise SpanError(f"span begin {begin} >= end {end}")
        if begin < 0 or end > len(question_text):
            raise SpanError(
                f"span ({begin}, {end}) out of bounds for question of "
                f"length {len(question_text)}"
            )
        title = normalize_title(str(entity))
        if not title:
            raise SpanError(f"span ({begin}, {end}) has an empty entity")
        spans.add(EntitySpan(begin, end, title))
    return sorted(spans)


def select_first_k_unique(spans: Sequence[EntitySpan], k: int) -> list[str]:
    """First ``k`` distinct entity titles in span order.

    Order of first occurrence is preserved; the result for ``k`` is always
    a prefix of the result for ``k + 1``.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    seen: list[str] = []
    for span in spans:
        if span.entity not in seen:
            seen.append(span.entity)
            if len(seen) == k:
                break
    return seen


def compute_annotation_stats(
    questions: Sequence[AnnotatedQuestion],
) -> AnnotationStats:
    """Maximum and mean span count plus the fraction of linked questions."""
    if not questions:
        raise ValueError("cannot compute annotation stats for zero questions")
    counts = [len(q.spans) for q in questions]
    linked = sum(1 for c in counts if c > 0)
    return AnnotationStats(
        max_entities=max(counts),
        avg_entities=sum(counts) / len(counts),
        linked_fraction=linked / len(counts),
    )


def load_annotation_file(path: Path | str) -> dict[str, list[dict]]:
    """Read JSONL annotations keyed by question id.

    Each line is ``{"question_id": ..., "spans": [{"begin", "end",
    "entity"}, ...]}``. A question id absent from the file simply has no
    spans.
    """
    out: dict[str, list[dict]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out[str(obj["question_id"])] = list(obj.get("spans", []))
            except (ValueError, KeyError, TypeError) as exc:
                raise SpanError(f"{path}:{line_no}: {exc}") from exc
    return out


def write_annotation_file(
    spans_by_question: Mapping[str, Sequence[EntitySpan]], path: Path | str
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for question_id, spans in spans_by_question.items():
            fh.write(
                json.dumps(
                    {
                        "question_id": question_id,
                        "spans": [
                            {"begin": s.begin_char, "end": s.end_char, "entity": s.entity}
                            for s in spans
                        ],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def apply_annotations(
    questions: Sequence[AnnotatedQuestion],
    spans_by_question: Mapping[str, list[dict]],
) -> None:
    """Replace every question's spans with the ones from an annotation file."""
    for question in questions:
        raw = spans_by_question.get(question.question_id, [])
        question.spans = parse_linker_output(raw, question.text)
