"""Chat-completions and scripted clients for relevance prompts."""

import asyncio
import json
import logging
from pathlib import Path
from typing import Any

import httpx
from pydantic import BaseModel

from ..config import LlmEndpointConfig, resolve_api_key
from ..errors import LlmRequestError, RelevanceError
from .base import LlmClient, PromptChunk
from .prompt import render_scores

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class ChatCompletionsClient(LlmClient):
    """Async client for an OpenAI-compatible /chat/completions endpoint."""

    provenance = "llm"

    def __init__(
        self,
        config: LlmEndpointConfig,
        transport: httpx.AsyncBaseTransport | None = None,
    ):
        """
        Initialize the client.

        Args:
            config: Endpoint settings including base_url, model and retry policy.
            transport: Optional httpx transport, used to mount a local app in tests.
        """
        self.config = config
        self.base_url = config.base_url.rstrip("/")
        self.model_name = config.model
        self._transport = transport

    def _build_headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json", "Accept": "application/json"}
        api_key = resolve_api_key(self.config)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def _build_body(self, chunk: PromptChunk) -> dict[str, Any]:
        return {
            "model": self.config.model,
            "messages": [{"role": "user", "content": chunk.text}],
            "temperature": self.config.temperature,
        }

    async def complete(self, chunk: PromptChunk) -> str:
        """
        Send one prompt and return the assistant message text.

        Connection errors, timeouts, 429 and 5xx responses are retried with
        exponential backoff. Other 4xx responses fail immediately.

        Raises:
            LlmRequestError: when the request fails or retries are exhausted.
        """
        url = f"{self.base_url}/chat/completions"
        body = self._build_body(chunk)
        status_code, detail = 0, ""

        for attempt in range(self.config.max_retries + 1):
            try:
                async with httpx.AsyncClient(timeout=self.config.timeout, transport=self._transport) as client:
                    response = await client.post(url, json=body, headers=self._build_headers())
            except httpx.ConnectError:
                status_code, detail = 0, f"Connection error: Could not connect to {self.base_url}"
            except httpx.TimeoutException:
                status_code, detail = 0, "Request timed out"
            else:
                status_code, detail = response.status_code, response.text
                if response.status_code == 200:
                    return self._extract_content(response)
                if response.status_code not in RETRYABLE_STATUS:
                    raise LlmRequestError(
                        f"chat completion failed with HTTP {response.status_code}",
                        status_code=response.status_code,
                        body=response.text[:500],
                    )

            if attempt < self.config.max_retries:
                delay = self.config.backoff_seconds * 2**attempt
                logger.warning(
                    f"Relevance request for {chunk.user_id} failed ({status_code or detail}); "
                    f"retry {attempt + 1}/{self.config.max_retries} in {delay:.2f}s"
                )
                await asyncio.sleep(delay)

        raise LlmRequestError(
            f"chat completion failed after {self.config.max_retries + 1} attempts",
            status_code=status_code,
            body=detail[:500],
        )

    @staticmethod
    def _extract_content(response: httpx.Response) -> str:
        try:
            data = response.json()
            return str(data["choices"][0]["message"]["content"])
        except (ValueError, KeyError, IndexError, TypeError):
            raise LlmRequestError(
                "chat completion response has no message content",
                status_code=response.status_code,
                body=response.text[:500],
            )


class ScriptedResponse(BaseModel):
    """Canned answer for one user: raw text, or scores per tweet id."""

    user_id: str
    response: str | None = None
    scores: dict[str, int] | None = None


def load_scripted_table(path: str | Path) -> dict[str, ScriptedResponse]:
    """Read a line-delimited table of ScriptedResponse records keyed by user id."""
    table: dict[str, ScriptedResponse] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                entry = ScriptedResponse.model_validate(json.loads(line))
                table[entry.user_id] = entry
    logger.info(f"Loaded {len(table)} scripted relevance responses from {path}")
    return table


class ScriptedLlmClient(LlmClient):
    """
    Offline stand-in for the chat endpoint.

    A raw ``response`` is returned verbatim. A ``scores`` map is rendered in
    the response format for the chunk's keys; tweets it does not list score 1.
    """

    provenance = "mock"
    model_name = "scripted"

    def __init__(self, table: dict[str, ScriptedResponse]):
        self.table = table

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedLlmClient":
        return cls(load_scripted_table(path))

    async def complete(self, chunk: PromptChunk) -> str:
        entry = self.table.get(chunk.user_id)
        if entry is None:
            raise RelevanceError(f"no scripted response for user {chunk.user_id}")
        if entry.response is not None:
            return entry.response
        scores = entry.scores or {}
        return render_scores({key: scores.get(tid, 1) for key, tid in chunk.key_to_tweet.items()})
