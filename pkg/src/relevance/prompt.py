"""Relevance prompt construction and score parsing."""

import logging
import re
from collections.abc import Collection, Mapping, Sequence

from ..datamodel import Tweet, User
from ..errors import RelevanceError
from .base import PromptChunk, RelevanceScore

logger = logging.getLogger(__name__)

DEFAULT_MAX_TWEETS_PER_PROMPT = 25

INSTRUCTION = (
    "Your task is to rate how strongly each tweet posted by the accounts this user follows "
    "relates to the tweets posted by the user. Express the relation as a score: "
    "score 1 means no association, score 2 means weak association, "
    "and score 3 means strong association."
)

OUTPUT_DIRECTIVE = (
    "Use the score to indicate how related each followee tweet is to the user's tweets. "
    "Answer in the order the tweets are given and only output the tweet number and "
    'corresponding score, formatted as "(tweet number:corresponding score)".'
)

_PAIR_PATTERN = re.compile(r"\(\s*([^()\s:]+)\s*:\s*([+-]?\d+)\s*\)")


def _one_line(text: str) -> str:
    return " ".join(text.split())


def followee_keys(followee_tweets: Sequence[tuple[str, Tweet]]) -> list[tuple[str, Tweet]]:
    """Assign "<followee_id>_<k>" keys, k counting each followee's tweets from 1."""
    counters: dict[str, int] = {}
    keyed: list[tuple[str, Tweet]] = []
    for followee_id, tweet in followee_tweets:
        counters[followee_id] = counters.get(followee_id, 0) + 1
        keyed.append((f"{followee_id}_{counters[followee_id]}", tweet))
    return keyed


def build_prompt(
    user: User,
    own_tweets: Sequence[Tweet],
    followee_tweets: Sequence[tuple[str, Tweet]],
    max_tweets_per_prompt: int = DEFAULT_MAX_TWEETS_PER_PROMPT,
) -> list[PromptChunk]:
    """
    Build relevance prompts for one user.

    Each prompt holds four blocks in order: instruction, the user's numbered
    tweets, a slice of at most ``max_tweets_per_prompt`` keyed followee
    tweets, and the output-format directive.

    Args:
        user: The user whose context is being filtered.
        own_tweets: The user's own tweets.
        followee_tweets: (followee_id, tweet) pairs to score.
        max_tweets_per_prompt: Followee tweets per prompt.

    Returns:
        One PromptChunk per slice; empty when there is nothing to score.
    """
    keyed = followee_keys(followee_tweets)
    user_block = "\n".join(f'{i}:"{_one_line(t.text)}"' for i, t in enumerate(own_tweets, start=1))

    chunks: list[PromptChunk] = []
    for index, start in enumerate(range(0, len(keyed), max_tweets_per_prompt)):
        part = keyed[start : start + max_tweets_per_prompt]
        followee_block = "\n".join(f"{key}:{_one_line(t.text)}" for key, t in part)
        text = "\n\n".join(
            [
                f"Instruction:\n{INSTRUCTION}",
                f"User's Tweets:\n{user_block}",
                f"Followees' Tweets:\n{followee_block}",
                f"Output format:\n{OUTPUT_DIRECTIVE}",
            ]
        )
        chunks.append(
            PromptChunk(user_id=user.id, text=text, key_to_tweet={k: t.id for k, t in part}, index=index)
        )
    return chunks


def render_scores(scores: Mapping[str, int]) -> str:
    """Render a score map in the response format: "(key:score), (key:score)"."""
    return ", ".join(f"({key}:{int(score)})" for key, score in scores.items())


def parse_scores(response: str, expected_keys: Collection[str]) -> dict[str, RelevanceScore]:
    """
    Extract "(key:score)" pairs from raw model text.

    Unknown keys are ignored, out-of-range scores and expected keys missing
    from the response become score 1; each case logs a warning.

    Raises:
        RelevanceError: if the response holds no "(key:score)" pair at all.
    """
    pairs = _PAIR_PATTERN.findall(response)
    if not pairs:
        raise RelevanceError(f"unparseable response: {response[:80]!r}")

    expected = set(expected_keys)
    scores: dict[str, RelevanceScore] = {}
    for key, raw in pairs:
        if key not in expected:
            logger.warning(f"Ignoring unknown key {key} in relevance response")
            continue
        value = int(raw)
        if value not in (1, 2, 3):
            logger.warning(f"Score {value} for {key} is out of range; treating as 1")
            value = 1
        scores[key] = RelevanceScore(value)

    missing = [k for k in expected_keys if k not in scores]
    if missing:
        logger.warning(f"{len(missing)} expected keys missing from response; scoring them 1: {missing[:5]}")
        for key in missing:
            scores[key] = RelevanceScore.NONE
    return {k: scores[k] for k in expected_keys}
