"""Ranking and answer metrics against hand values and brute-force oracles."""

import math
import random

import pytest

from entityrag.metrics import (
    Judgment,
    exact_match,
    judge_relevance,
    metric_report,
    mrr,
    ndcg_at_k,
    normalize_text,
    parse_boolean_answer,
    score_answer,
    strategyqa_evaluate,
    token_f1,
    topk_retrieval_accuracy,
)

from conftest import SEINE_BODY_100


def judgments_of(*flag_lists):
    return [Judgment(f"q{i}", tuple(flags)) for i, flags in enumerate(flag_lists)]


# ---------------------------------------------------------------------------
# normalization


def test_normalize_drops_articles_and_punctuation():
    assert normalize_text("The Joan Collins.") == ["joan", "collins"]


def test_normalize_single_word():
    assert normalize_text("Bobigny") == ["bobigny"]


def test_normalize_hyphenated_splits():
    assert normalize_text("Saint-Denis, Seine-Saint-Denis") == [
        "saint",
        "denis",
        "seine",
        "saint",
        "denis",
    ]


def test_normalize_has_no_articles_or_punctuation():
    rng = random.Random(2)
    pieces = ["The", "a", "an", "cat's", "dog-house!", "Ump, teen?", "plain"]
    for _ in range(100):
        text = " ".join(rng.choice(pieces) for _ in range(rng.randrange(0, 8)))
        tokens = normalize_text(text)
        assert all(t not in ("a", "an", "the") for t in tokens)
        assert all(t.isalnum() or "'" not in t for t in tokens)


# ---------------------------------------------------------------------------
# relevance judging


def test_seine_document_relevant_for_bobigny():
    doc = "Seine-Saint-Denis\n" + SEINE_BODY_100
    assert judge_relevance(doc, ["Bobigny"]) == 1


def test_irrelevant_document():
    assert judge_relevance("dog ran fast", ["cat"]) == 0


def test_any_answer_rule():
    doc = "last night Joan Collins appeared on stage"
    assert judge_relevance(doc, ["J. Collins", "Joan Collins"]) == 1


def test_relevance_is_token_level_not_substring():
    # "cat" inside "catalogue" must not count.
    assert judge_relevance("the catalogue was long", ["cat"]) == 0


def test_relevance_multiword_contiguous():
    assert judge_relevance("by Pyotr Ilyich Tchaikovsky in 1875", ["Ilyich Tchaikovsky"]) == 1
    assert judge_relevance("Pyotr someone Tchaikovsky", ["Pyotr Tchaikovsky"]) == 0


def test_relevance_monotone_under_extension():
    rng = random.Random(3)
    vocabulary = ["alpha", "beta", "gamma", "delta"]
    for _ in range(100):
        doc = " ".join(rng.choice(vocabulary) for _ in range(rng.randrange(1, 10)))
        gold = [" ".join(rng.choice(vocabulary) for _ in range(rng.randrange(1, 3)))]
        if judge_relevance(doc, gold) == 1:
            assert judge_relevance(doc + " tail words here", gold) == 1


def test_relevance_requires_gold():
    with pytest.raises(ValueError):
        judge_relevance("text", [])


# ---------------------------------------------------------------------------
# nDCG


def test_ndcg_relevant_at_rank_one():
    assert ndcg_at_k(judgments_of([1, 0, 0]), 3) == 1.0


def test_ndcg_hand_value():
    expected = (1 / math.log2(3) + 1 / math.log2(4)) / (1 / math.log2(2) + 1 / math.log2(3))
    assert ndcg_at_k(judgments_of([0, 1, 1]), 3) == pytest.approx(expected, abs=1e-12)
    assert ndcg_at_k(judgments_of([0, 1, 1]), 3) == pytest.approx(0.6934, abs=1e-4)


def test_ndcg_zero_when_nothing_relevant():
    assert ndcg_at_k(judgments_of([0, 0]), 2) == 0.0


def test_ndcg_pads_short_vectors():
    assert ndcg_at_k(judgments_of([1]), 4) == 1.0
    assert ndcg_at_k(judgments_of([]), 4) == 0.0


def test_ndcg_top_block_is_optimal():
    # All relevant docs packed at the top ranks from rank 1 -> exactly 1.
    for flags in ([1, 1, 0, 0], [1, 1, 1, 0], [1, 0, 0, 0], [1, 1, 1, 1]):
        assert ndcg_at_k(judgments_of(flags), 4) == pytest.approx(1.0)


def test_ndcg_in_unit_interval_and_mean_over_questions():
    rng = random.Random(9)
    judgments = [
        Judgment(f"q{i}", tuple(rng.randrange(2) for _ in range(rng.randrange(0, 8))))
        for i in range(50)
    ]
    value = ndcg_at_k(judgments, 5)
    assert 0.0 <= value <= 1.0
    singles = [ndcg_at_k([j], 5) for j in judgments]
    assert value == pytest.approx(sum(singles) / len(singles))


# ---------------------------------------------------------------------------
# MRR


def test_mrr_hand_value():
    assert mrr(judgments_of([1, 0], [0, 1])) == pytest.approx(0.75)


def test_mrr_all_first():
    assert mrr(judgments_of([1], [1, 0], [1, 1])) == 1.0


def test_mrr_none_relevant():
    assert mrr(judgments_of([0, 0], [0])) == 0.0


def test_mrr_rejects_empty():
    with pytest.raises(ValueError):
        mrr([])


# ---------------------------------------------------------------------------
# top-k retrieval accuracy


def test_topk_hand_values():
    judgments = judgments_of([1, 0], [0, 0], [0, 1], [0, 0])
    assert topk_retrieval_accuracy(judgments, 2) == pytest.approx(0.5)
    assert topk_retrieval_accuracy(judgments, 1) == pytest.approx(0.25)


def test_topk_random_vs_counting_oracle():
    rng = random.Random(31)
    judgments = [
        Judgment(f"q{i}", tuple(rng.randrange(2) for _ in range(rng.randrange(0, 9))))
        for i in range(100)
    ]
    for k in (1, 2, 4, 8):
        hits = 0
        for j in judgments:
            found = False
            for flag in list(j.flags)[:k]:
                if flag == 1:
                    found = True
            if found:
                hits += 1
        assert topk_retrieval_accuracy(judgments, k) == pytest.approx(hits / 100)


def test_topk_non_decreasing_in_k():
    rng = random.Random(37)
    judgments = [
        Judgment(f"q{i}", tuple(rng.randrange(2) for _ in range(6))) for i in range(40)
    ]
    values = [topk_retrieval_accuracy(judgments, k) for k in range(1, 7)]
    assert values == sorted(values)


def test_ranking_metrics_permutation_invariant():
    rng = random.Random(41)
    judgments = [
        Judgment(f"q{i}", tuple(rng.randrange(2) for _ in range(5))) for i in range(25)
    ]
    base = (ndcg_at_k(judgments, 4), mrr(judgments), topk_retrieval_accuracy(judgments, 4))
    for _ in range(5):
        rng.shuffle(judgments)
        assert (
            ndcg_at_k(judgments, 4),
            mrr(judgments),
            topk_retrieval_accuracy(judgments, 4),
        ) == base


# ---------------------------------------------------------------------------
# exact match and token F1


def test_em_exact():
    assert exact_match("Joan Collins", ["Joan Collins"]) == 1


def test_em_normalized_punctuation():
    assert exact_match("bobigny.", ["Bobigny"]) == 1


def test_em_wrong_answer():
    assert exact_match("Saint-Denis", ["Bobigny"]) == 0


def test_f1_hand_value():
    assert token_f1("Joan Collins performed", ["Joan Collins"]) == pytest.approx(0.8)


def test_f1_identical():
    assert token_f1("The Bobigny.", ["bobigny"]) == 1.0


def test_f1_disjoint():
    assert token_f1("cat", ["dog"]) == 0.0


def test_f1_max_over_golds():
    assert token_f1("Joan Collins", ["nobody", "Joan Collins"]) == 1.0


def test_em_implies_f1():
    rng = random.Random(47)
    words = ["the", "Joan", "collins!", "Bobigny", "a", "lake", "Swan."]
    for _ in range(300):
        prediction = " ".join(rng.choice(words) for _ in range(rng.randrange(0, 5)))
        golds = [
            " ".join(rng.choice(words) for _ in range(rng.randrange(0, 5)))
            for _ in range(rng.randrange(1, 3))
        ]
        score = score_answer(prediction, golds)
        if score.em == 1:
            assert score.f1 == 1.0


# ---------------------------------------------------------------------------
# StrategyQA scoring


def test_strategyqa_fixture():
    result = strategyqa_evaluate(["Yes", "no", "Maybe"], [True, False, True])
    assert (result.correct, result.invalid, result.total) == (2, 1, 3)


def test_strategyqa_all_yes_correct():
    result = strategyqa_evaluate(["Yes"] * 4, [True] * 4)
    assert result.correct == result.total == 4 and result.invalid == 0


def test_strategyqa_empty_prediction_invalid():
    result = strategyqa_evaluate([""], [True])
    assert result.invalid == 1 and result.correct == 0


def test_strategyqa_punctuated_answers():
    assert parse_boolean_answer("Yes.") is True
    assert parse_boolean_answer("No,") is False
    assert parse_boolean_answer("Probably yes") is None


def test_strategyqa_length_mismatch():
    with pytest.raises(ValueError):
        strategyqa_evaluate(["Yes"], [True, False])


def test_wrong_but_valid_answer_counts_neither():
    result = strategyqa_evaluate(["yes"], [False])
    assert (result.correct, result.invalid, result.total) == (0, 0, 1)


# ---------------------------------------------------------------------------
# report schema


def test_metric_report_factoid_fields():
    judgments = judgments_of([1, 0], [0, 1])
    scores = [score_answer("a", ["a"]), score_answer("b", ["c"])]
    report = metric_report(k=4, judgments=judgments, answer_scores=scores, n_questions=2)
    assert set(report) == {"ndcg@4", "mrr", "top4_accuracy", "em", "f1", "n_questions"}


def test_metric_report_boolean_fields():
    boolean = strategyqa_evaluate(["Yes", "maybe"], [True, False])
    report = metric_report(boolean_score=boolean, n_questions=2)
    assert set(report) == {"accuracy", "invalid_count", "n_questions"}
    assert report["accuracy"] == 0.5 and report["invalid_count"] == 1
