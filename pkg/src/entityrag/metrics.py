"""Ranking and answer-quality metrics for retrieval QA runs.

Text normalization (shared by relevance judging, exact match and token F1)
lowercases, replaces every Unicode punctuation character with a space,
splits on whitespace and drops the articles ``a``, ``an``, ``the``.

Ranking metrics consume per-question :class:`Judgment` vectors of binary
relevance flags ordered by rank. Aggregates iterate questions sorted by
question id, so scores are independent of input ordering.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

ARTICLES = frozenset({"a", "an", "the"})


@dataclass(frozen=True)
class Judgment:
    """Binary relevance flags for one question's ranked documents."""

    question_id: str
    flags: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "flags", tuple(self.flags))
        if any(f not in (0, 1) for f in self.flags):
            raise ValueError(f"flags must be 0/1, got {self.flags}")


@dataclass(frozen=True)
class AnswerScore:
    em: int
    f1: float


@dataclass(frozen=True)
class BooleanScore:
    correct: int
    invalid: int
    total: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0


@lru_cache(maxsize=4096)
def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize_text(raw: str) -> list[str]:
    """Lowercased tokens with punctuation and articles removed.

    Punctuation acts as a separator, so hyphenated names split into their
    parts ("Seine-Saint-Denis" -> seine, saint, denis).
    """
    lowered = raw.lower()
    cleaned = "".join(" " if _is_punctuation(ch) else ch for ch in lowered)
    return [token for token in cleaned.split() if token not in ARTICLES]


def _contains_contiguous(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    needle = list(needle)
    return any(list(haystack[i : i + n]) == needle for i in range(len(haystack) - n + 1))


def judge_relevance(doc_text: str, gold_answers: Sequence[str]) -> int:
    """1 iff any gold answer's normalized tokens appear contiguously in the document.

    Token-level matching avoids firing on substrings inside longer words.
    Gold answers that normalize to nothing cannot match.
    """
    if not gold_answers:
        raise ValueError("at least one gold answer is required")
    doc_tokens = normalize_text(doc_text)
    for answer in gold_answers:
        if _contains_contiguous(doc_tokens, normalize_text(answer)):
            return 1
    return 0


def _ordered(judgments: Sequence[Judgment]) -> list[Judgment]:
    if not judgments:
        raise ValueError("at least one judgment is required")
    return sorted(judgments, key=lambda j: j.question_id)


def _flags_at_k(judgment: Judgment, k: int) -> list[int]:
    # Shorter vectors are zero padded: a retriever may return fewer than k docs.
    flags = list(judgment.flags[:k])
    return flags + [0] * (k - len(flags))


def ndcg_at_k(judgments: Sequence[Judgment], k: int) -> float:
    """Mean normalized discounted cumulative gain over the top k ranks.

    Per question: DCG = sum over ranks i=1..k of (2^r_i - 1) / log2(i + 1);
    the ideal DCG places the question's retrieved relevant documents at the
    top ranks. Flag vectors shorter than k are zero padded (retrievers may
    return fewer than k documents). Questions with no relevant document in
    the top k contribute 0 by convention.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    total = 0.0
    ordered = _ordered(judgments)
    for judgment in ordered:
        flags = _flags_at_k(judgment, k)
        dcg = sum(
            (2**flag - 1) / math.log2(rank + 1)
            for rank, flag in enumerate(flags, start=1)
        )
        relevant = sum(flags)
        if relevant == 0:
            continue
        idcg = sum(1 / math.log2(rank + 1) for rank in range(1, relevant + 1))
        total += dcg / idcg
    return total / len(ordered)


def mrr(judgments: Sequence[Judgment]) -> float:
    """Mean reciprocal rank of the first relevant document.

    Questions whose list contains no relevant document contribute 0.
    """
    total = 0.0
    ordered = _ordered(judgments)
    for judgment in ordered:
        for rank, flag in enumerate(judgment.flags, start=1):
            if flag:
                total += 1 / rank
                break
    return total / len(ordered)


def topk_retrieval_accuracy(judgments: Sequence[Judgment], k: int) -> float:
    """Fraction of questions with at least one relevant document in the top k.

    Returned in [0, 1]; reports render it as a percentage.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ordered = _ordered(judgments)
    hits = sum(1 for j in ordered if any(j.flags[:k]))
    return hits / len(ordered)


def exact_match(prediction: str, gold_answers: Sequence[str]) -> int:
    """1 iff the normalized prediction equals any normalized gold answer."""
    if not gold_answers:
        raise ValueError("at least one gold answer is required")
    predicted = normalize_text(prediction)
    return int(any(predicted == normalize_text(gold) for gold in gold_answers))


def token_f1(prediction: str, gold_answers: Sequence[str]) -> float:
    """Best token-overlap F1 against any gold answer.

    Precision and recall are computed over normalized-token multisets.
    Two empty token sequences score 1; one empty side scores 0.
    """
    if not gold_answers:
        raise ValueError("at least one gold answer is required")
    predicted = normalize_text(prediction)
    best = 0.0
    for gold in gold_answers:
        gold_tokens = normalize_text(gold)
        if not predicted and not gold_tokens:
            best = max(best, 1.0)
            continue
        if not predicted or not gold_tokens:
            continue
        overlap = sum((Counter(predicted) & Counter(gold_tokens)).values())
        if overlap == 0:
            continue
        precision = overlap / len(predicted)
        recall = overlap / len(gold_tokens)
        best = max(best, 2 * precision * recall / (precision + recall))
    return best


def score_answer(prediction: str, gold_answers: Sequence[str]) -> AnswerScore:
    return AnswerScore(
        em=exact_match(prediction, gold_answers),
        f1=token_f1(prediction, gold_answers),
    )


def parse_boolean_answer(prediction: str) -> bool | None:
    """Map a model response to True/False via its first normalized token.

    Anything that is not yes/no (including an empty response) is invalid
    and maps to None.
    """
    tokens = normalize_text(prediction)
    if not tokens:
        return None
    if tokens[0] == "yes":
        return True
    if tokens[0] == "no":
        return False
    return None


def strategyqa_evaluate(
    predictions: Sequence[str], golds: Sequence[bool]
) -> BooleanScore:
    """Count correct yes/no answers and responses that are neither."""
    if len(predictions) != len(golds):
        raise ValueError(
            f"{len(predictions)} predictions vs {len(golds)} gold labels"
        )
    correct = 0
    invalid = 0
    for prediction, gold in zip(predictions, golds):
        parsed = parse_boolean_answer(prediction)
        if parsed is None:
            invalid += 1
        elif parsed == gold:
            correct += 1
    return BooleanScore(correct=correct, invalid=invalid, total=len(golds))


def metric_report(
    k: int | None = None,
    judgments: Sequence[Judgment] | None = None,
    answer_scores: Sequence[AnswerScore] | None = None,
    boolean_score: BooleanScore | None = None,
    n_questions: int | None = None,
) -> dict:
    """Assemble the flat metric-report object; inapplicable fields are absent.

    Field names follow the on-disk report schema: ``ndcg@{k}``, ``mrr``,
    ``top{k}_accuracy``, ``em``, ``f1``, ``accuracy``, ``invalid_count``,
    ``n_questions``. All rates are fractions in [0, 1].
    """
    report: dict = {}
    if judgments is not None and k is not None:
        report[f"ndcg@{k}"] = ndcg_at_k(judgments, k)
        report["mrr"] = mrr(judgments)
        report[f"top{k}_accuracy"] = topk_retrieval_accuracy(judgments, k)
    if answer_scores is not None:
        n = len(answer_scores)
        report["em"] = sum(s.em for s in answer_scores) / n if n else 0.0
        report["f1"] = sum(s.f1 for s in answer_scores) / n if n else 0.0
    if boolean_score is not None:
        report["accuracy"] = boolean_score.accuracy
        report["invalid_count"] = boolean_score.invalid
    if n_questions is not None:
        report["n_questions"] = n_questions
    return report


def judge_run(
    docs_by_question: Mapping[str, Sequence],
    gold_by_question: Mapping[str, Sequence[str]],
) -> list[Judgment]:
    """Judge every cached document list against its question's gold answers."""
    judgments = []
    for question_id, docs in docs_by_question.items():
        golds = gold_by_question[question_id]
        flags = tuple(judge_relevance(doc.text, golds) for doc in docs)
        judgments.append(Judgment(question_id, flags))
    return judgments
