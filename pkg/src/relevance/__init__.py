"""Relevance filtering of followee tweets."""

from .base import FilterReport, LlmClient, PromptChunk, RelevanceScore
from .cache import VerdictCache
from .client import ChatCompletionsClient, ScriptedLlmClient, ScriptedResponse, load_scripted_table
from .filter import (
    cosine_similarity,
    filter_cosine,
    filter_llm,
    filter_users_cosine,
    filter_users_llm,
    retained_followee_tweets,
    score_from_cosine,
)
from .prompt import build_prompt, parse_scores, render_scores

__all__ = [
    "ChatCompletionsClient",
    "FilterReport",
    "LlmClient",
    "PromptChunk",
    "RelevanceScore",
    "ScriptedLlmClient",
    "ScriptedResponse",
    "VerdictCache",
    "build_prompt",
    "cosine_similarity",
    "filter_cosine",
    "filter_llm",
    "filter_users_cosine",
    "filter_users_llm",
    "load_scripted_table",
    "parse_scores",
    "render_scores",
    "retained_followee_tweets",
    "score_from_cosine",
]
