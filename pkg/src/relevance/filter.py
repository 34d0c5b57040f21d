"""Followee-tweet relevance filtering: LLM-scored or cosine fallback."""

import asyncio
import logging
from collections.abc import Mapping, Sequence

import numpy as np

from ..datamodel import Corpus, Tweet, User
from ..embedding import Embedder
from ..errors import RelevanceError
from .base import FilterReport, LlmClient, RelevanceScore
from .cache import VerdictCache
from .prompt import DEFAULT_MAX_TWEETS_PER_PROMPT, build_prompt, parse_scores

logger = logging.getLogger(__name__)

WEAK_THRESHOLD = 0.7
STRONG_THRESHOLD = 0.85


def score_from_cosine(similarity: float) -> RelevanceScore:
    """Map cosine similarity to a score: <0.7 none, [0.7, 0.85) weak, >=0.85 strong."""
    if similarity >= STRONG_THRESHOLD:
        return RelevanceScore.STRONG
    if similarity >= WEAK_THRESHOLD:
        return RelevanceScore.WEAK
    return RelevanceScore.NONE


def cosine_similarity(u: np.ndarray, t: np.ndarray) -> float:
    """Cosine of two vectors; 0.0 when either has zero norm."""
    if u.shape != t.shape:
        raise RelevanceError(f"vector widths differ: {u.shape} vs {t.shape}")
    denom = float(np.linalg.norm(u) * np.linalg.norm(t))
    if denom == 0.0:
        return 0.0
    return float(np.dot(u, t) / denom)


def filter_cosine(u_vec: np.ndarray, tweet_vecs: Mapping[str, np.ndarray], user_id: str = "") -> FilterReport:
    """Score followee tweets by cosine similarity to the user's embedding."""
    scores = {tid: score_from_cosine(cosine_similarity(u_vec, vec)) for tid, vec in tweet_vecs.items()}
    return FilterReport(user_id=user_id, scores=scores, provenance="cosine")


async def filter_llm(
    user: User,
    own_tweets: Sequence[Tweet],
    followee_tweets: Sequence[tuple[str, Tweet]],
    client: LlmClient,
    max_tweets_per_prompt: int = DEFAULT_MAX_TWEETS_PER_PROMPT,
    cache: VerdictCache | None = None,
) -> FilterReport:
    """
    Score one user's followee tweets with an LLM client.

    Prompt chunks are sent in order and their scores merged by tweet id.
    Tweets already in the cache are not asked again.

    Raises:
        RelevanceError: if a response cannot be parsed.
        LlmRequestError: if the endpoint keeps failing.
    """
    scores: dict[str, RelevanceScore] = {}
    pending: list[tuple[str, Tweet]] = []
    for followee_id, tweet in followee_tweets:
        cached = cache.get(user.id, tweet.id, client.model_name) if cache is not None else None
        if cached is not None:
            scores[tweet.id] = cached
        else:
            pending.append((followee_id, tweet))

    fresh: dict[str, RelevanceScore] = {}
    for chunk in build_prompt(user, own_tweets, pending, max_tweets_per_prompt):
        response = await client.complete(chunk)
        for key, score in parse_scores(response, chunk.keys).items():
            fresh[chunk.key_to_tweet[key]] = score

    if cache is not None and fresh:
        await cache.put_many(user.id, client.model_name, fresh)
    scores.update(fresh)

    ordered = {tweet.id: scores[tweet.id] for _, tweet in followee_tweets}
    return FilterReport(user_id=user.id, scores=ordered, provenance=client.provenance)


async def filter_users_llm(
    corpus: Corpus,
    users: Sequence[User],
    client: LlmClient,
    max_tweets_per_prompt: int = DEFAULT_MAX_TWEETS_PER_PROMPT,
    concurrency: int = 5,
    cache: VerdictCache | None = None,
) -> dict[str, FilterReport]:
    """Run filter_llm for many users with at most ``concurrency`` in flight."""
    semaphore = asyncio.Semaphore(concurrency)

    async def filter_with_semaphore(user: User) -> FilterReport:
        async with semaphore:
            return await filter_llm(
                user,
                corpus.own_tweets(user),
                corpus.followee_tweets(user),
                client,
                max_tweets_per_prompt,
                cache,
            )

    todo = [u for u in users if u.followee_ids]
    reports = await asyncio.gather(*(filter_with_semaphore(u) for u in todo))
    if cache is not None:
        cache.compact()
    result = {r.user_id: r for r in reports}
    _log_summary(result)
    return result


def filter_users_cosine(corpus: Corpus, users: Sequence[User], embedder: Embedder) -> dict[str, FilterReport]:
    """Cosine filtering for every user with followees."""
    tweet_cache: dict[str, np.ndarray] = {}
    reports: dict[str, FilterReport] = {}
    for user in users:
        pairs = corpus.followee_tweets(user)
        if not pairs:
            continue
        u_vec = embedder.embed_user(user, corpus.own_tweets(user)).vector
        vecs: dict[str, np.ndarray] = {}
        for _, tweet in pairs:
            if tweet.id not in tweet_cache:
                tweet_cache[tweet.id] = embedder.embed_tweet(tweet).vector
            vecs[tweet.id] = tweet_cache[tweet.id]
        reports[user.id] = filter_cosine(u_vec, vecs, user_id=user.id)
    _log_summary(reports)
    return reports


def retained_followee_tweets(
    corpus: Corpus,
    users: Sequence[User],
    reports: Mapping[str, FilterReport] | None,
) -> dict[str, list[Tweet]]:
    """
    Followee tweets each user keeps. Without reports every followee tweet is kept.

    A user missing from ``reports`` keeps nothing.
    """
    kept: dict[str, list[Tweet]] = {}
    for user in users:
        pairs = corpus.followee_tweets(user)
        if reports is None:
            tweets = [t for _, t in pairs]
        else:
            report = reports.get(user.id)
            keep = set(report.retained) if report is not None else set()
            tweets = [t for _, t in pairs if t.id in keep]
        if tweets:
            kept[user.id] = tweets
    return kept


def _log_summary(reports: Mapping[str, FilterReport]) -> None:
    total = sum(len(r.scores) for r in reports.values())
    retained = sum(len(r.retained) for r in reports.values())
    logger.info(f"Relevance filter: {retained}/{total} followee tweets retained across {len(reports)} users")
