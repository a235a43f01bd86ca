"""Prompt templates must match the golden fixtures byte for byte."""

from pathlib import Path

import pytest

from entityrag.prompts import PromptRequest, build_prompt, prompt_for

from conftest import SEINE_BODY_100

GOLDEN_DIR = Path(__file__).parent / "data" / "prompts"
SEINE_QUESTION = "What is the capital of Seine-Saint-Denis?"


def golden(name: str) -> bytes:
    return (GOLDEN_DIR / name).read_bytes()


def test_closed_book_matches_golden():
    prompt = prompt_for(SEINE_QUESTION)
    assert prompt.encode("utf-8") == golden("closed_book.txt")


def test_single_document_matches_golden():
    document = "Seine-Saint-Denis\n" + SEINE_BODY_100
    prompt = prompt_for(SEINE_QUESTION, [document])
    assert prompt.encode("utf-8") == golden("single_doc.txt")


def test_multi_document_matches_golden():
    prompt = prompt_for(
        "Which document matters?",
        ["First document.", "Second document.", "Third document."],
    )
    assert prompt.encode("utf-8") == golden("multi_doc.txt")


def test_single_doc_trivial_form():
    assert prompt_for("Q?", ["D"]) == "D\n\nBased on this text, answer this question:\nQ: Q?\nA:"


def test_three_docs_block_structure():
    prompt = prompt_for("Q?", ["D1", "D2", "D3"])
    head, instruction = prompt.rsplit("\n\n", 1)
    assert head.split("\n\n") == ["D1", "D2", "D3"]
    assert instruction.startswith("Based on these texts, answer this question:")


def test_singular_vs_plural_instruction():
    assert "this text," in prompt_for("Q?", ["only"])
    assert "these texts," in prompt_for("Q?", ["one", "two"])
    assert "these texts," not in prompt_for("Q?", ["only"])


def test_prompt_shape_invariants():
    for documents in ([], ["d"], ["d1", "d2"], ["d1", "d2", "d3", "d4"]):
        prompt = prompt_for("What now?", documents)
        assert prompt.endswith("A:")
        assert prompt.count("\nQ: ") + prompt.startswith("Q: ") == 1
        assert "\r" not in prompt


def test_prompt_deterministic():
    request = PromptRequest(question="Q?", documents=["a", "b"])
    assert build_prompt(request) == build_prompt(request)


def test_empty_question_rejected():
    with pytest.raises(ValueError):
        build_prompt(PromptRequest(question=""))


def test_documents_keep_rank_order():
    prompt = prompt_for("Q?", ["zebra", "apple", "mango"])
    assert prompt.index("zebra") < prompt.index("apple") < prompt.index("mango")
