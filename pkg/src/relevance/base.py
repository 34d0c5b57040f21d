"""Relevance scores, per-user filter reports and the LLM client interface."""

from abc import ABC, abstractmethod
from enum import IntEnum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

Provenance = Literal["llm", "cosine", "mock"]


class RelevanceScore(IntEnum):
    """How related a followee tweet is to the user's own tweets."""

    NONE = 1
    WEAK = 2
    STRONG = 3

    @property
    def retained(self) -> bool:
        return self >= RelevanceScore.WEAK


class FilterReport(BaseModel):
    """Scores for one user's followee tweets, keyed by tweet id."""

    user_id: str
    scores: dict[str, RelevanceScore]
    provenance: Provenance

    @property
    def retained(self) -> list[str]:
        return [tid for tid, score in self.scores.items() if score.retained]

    @property
    def discarded(self) -> list[str]:
        return [tid for tid, score in self.scores.items() if not score.retained]


class PromptChunk(BaseModel):
    """One prompt for one user, with the followee keys it asks about."""

    model_config = ConfigDict(frozen=True)

    user_id: str
    text: str
    key_to_tweet: dict[str, str] = Field(default_factory=dict)
    index: int = 0

    @property
    def keys(self) -> list[str]:
        return list(self.key_to_tweet)


class LlmClient(ABC):
    """Anything that answers a relevance prompt with raw model text."""

    provenance: Provenance = "llm"
    model_name: str = ""

    @abstractmethod
    async def complete(self, chunk: PromptChunk) -> str:
        """Return the model's raw text for a prompt chunk."""
