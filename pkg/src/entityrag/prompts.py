"""Prompt construction for the reader model.

Three fixed templates cover zero, one, and many augmentation documents.
Output is deterministic, LF-only, and ends with the answer cue "A:" so
the reader continues directly with the answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

CLOSED_BOOK_TEMPLATE = "Answer this question:\nQ: {question}\nA:"
SINGLE_DOC_INSTRUCTION = "Based on this text, answer this question:"
MULTI_DOC_INSTRUCTION = "Based on these texts, answer this question:"


@dataclass
class PromptRequest:
    """One reader call: a question, optional documents, a generation cap.

    ``max_generation_tokens`` defaults to 10 for free-form factoid answers;
    boolean datasets use 1.
    """

    question: str
    documents: list[str] = field(default_factory=list)
    max_generation_tokens: int = 10


def build_prompt(request: PromptRequest) -> str:
    """Render the prompt for a request; document order is preserved.

    With no documents the closed-book template is used. With documents,
    each document block and the instruction are separated by blank lines,
    and the instruction switches between "this text" and "these texts"
    depending on the document count.
    """
    question = request.question
    if not question:
        raise ValueError("question must be non-empty")
    if not request.documents:
        return CLOSED_BOOK_TEMPLATE.format(question=question)
    instruction = (
        SINGLE_DOC_INSTRUCTION if len(request.documents) == 1 else MULTI_DOC_INSTRUCTION
    )
    blocks = list(request.documents) + [f"{instruction}\nQ: {question}\nA:"]
    return "\n\n".join(blocks)


def prompt_for(question: str, documents: Sequence[str] = ()) -> str:
    """Convenience wrapper building the prompt straight from strings."""
    return build_prompt(PromptRequest(question=question, documents=list(documents)))
