"""Reader model clients: a minimal HTTP JSON contract plus offline stubs.

The wire contract is a single POST with body ``{"prompt": ...,
"max_tokens": ...}`` answered by ``{"text": ...}``. Anything provider
specific (chat templates, tokenizers) belongs in an adapter behind that
endpoint, not here.

Stubs make the whole pipeline runnable and deterministic without a model:
``echo`` replays the leading words of the question, ``oracle`` answers
with the first gold answer that appears verbatim in the prompt's
augmentation documents (or "unknown"). Stub token counting is whitespace
words; real deployments count subwords on the serving side.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import httpx

TOKEN_ENV_VAR = "ENTITYRAG_LLM_TOKEN"

_INSTRUCTION_MARKERS = (
    "\n\nBased on this text, answer this question:",
    "\n\nBased on these texts, answer this question:",
)


class LlmError(Exception):
    """The reader endpoint failed after all retry attempts."""


@dataclass
class LlmExchange:
    """One reader call, recorded verbatim before any normalization."""

    question_id: str
    prompt: str
    max_tokens: int
    response: str
    latency_ms: float
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


class LlmClient(Protocol):
    def generate(self, prompt: str, max_tokens: int) -> str: ...


def _cap_tokens(text: str, max_tokens: int) -> str:
    return " ".join(text.split()[:max_tokens])


def question_of_prompt(prompt: str) -> str:
    """The question line content between the final "Q: " and trailing "A:"."""
    marker = "\nQ: "
    start = prompt.rfind(marker)
    if start < 0:
        return ""
    tail = prompt[start + len(marker) :]
    end = tail.rfind("\nA:")
    return tail[:end] if end >= 0 else tail


def documents_of_prompt(prompt: str) -> str:
    """The document section preceding the instruction; empty when closed book."""
    for marker in _INSTRUCTION_MARKERS:
        idx = prompt.rfind(marker)
        if idx >= 0:
            return prompt[:idx]
    return ""


class StubLlm:
    """Deterministic reader stand-in.

    ``echo`` answers with the first ``max_tokens`` whitespace tokens of the
    prompt tail (the question line). ``oracle`` scans the augmentation
    documents for the question's gold answers and returns the first one
    found verbatim, else "unknown"; it needs an ``answer_key`` mapping
    question text to gold answer strings.
    """

    def __init__(
        self, mode: str = "echo", answer_key: Mapping[str, Sequence[str]] | None = None
    ):
        if mode not in ("echo", "oracle"):
            raise ValueError(f"unknown stub mode {mode!r}")
        if mode == "oracle" and answer_key is None:
            raise ValueError("oracle mode requires an answer key")
        self.mode = mode
        self.answer_key = dict(answer_key or {})

    def generate(self, prompt: str, max_tokens: int) -> str:
        question = question_of_prompt(prompt)
        if self.mode == "echo":
            return _cap_tokens(question, max_tokens)
        documents = documents_of_prompt(prompt)
        for gold in self.answer_key.get(question, ()):
            if gold and gold in documents:
                return _cap_tokens(gold, max_tokens)
        return "unknown"


class HttpLlmClient:
    """Client for the POST {prompt, max_tokens} -> {text} contract.

    Transport failures and 5xx responses are retried up to ``max_attempts``
    times; other HTTP errors and malformed payloads fail immediately. A
    bearer token is read from ``ENTITYRAG_LLM_TOKEN`` unless passed
    explicitly.
    """

    def __init__(
        self,
        endpoint: str,
        token: str | None = None,
        timeout: float = 30.0,
        max_attempts: int = 3,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.max_attempts = max(1, max_attempts)
        token = token if token is not None else os.environ.get(TOKEN_ENV_VAR)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def generate(self, prompt: str, max_tokens: int) -> str:
        payload = {"prompt": prompt, "max_tokens": max_tokens}
        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self._client.post(self.endpoint, json=payload)
                if response.status_code >= 500:
                    raise LlmError(f"server error {response.status_code}")
                response.raise_for_status()
                body = response.json()
            except (httpx.TransportError, LlmError) as exc:
                last_error = exc
                if attempt < self.max_attempts:
                    time.sleep(min(0.1 * attempt, 1.0))
                continue
            except (httpx.HTTPStatusError, ValueError) as exc:
                raise LlmError(f"reader endpoint rejected the request: {exc}") from exc
            text = body.get("text") if isinstance(body, dict) else None
            if not isinstance(text, str):
                raise LlmError(f"reader endpoint returned no 'text' field: {body!r}")
            return text
        raise LlmError(
            f"reader endpoint failed after {self.max_attempts} attempts: {last_error}"
        )

    def close(self) -> None:
        self._client.close()


def make_client(
    endpoint: str,
    answer_key: Mapping[str, Sequence[str]] | None = None,
    token: str | None = None,
    timeout: float = 30.0,
    max_attempts: int = 3,
    http_client: httpx.Client | None = None,
) -> LlmClient:
    """Build a client from an endpoint spec.

    ``stub`` or ``stub:echo`` and ``stub:oracle`` select the offline stubs;
    anything else is treated as an HTTP endpoint URL.
    """
    if endpoint == "stub" or endpoint == "stub:echo":
        return StubLlm(mode="echo")
    if endpoint == "stub:oracle":
        return StubLlm(mode="oracle", answer_key=answer_key or {})
    return HttpLlmClient(
        endpoint,
        token=token,
        timeout=timeout,
        max_attempts=max_attempts,
        client=http_client,
    )
