"""Seeded signed feature-hashing embedder with mean pooling."""

import logging
import re
from collections.abc import Sequence

import numpy as np
from sklearn.utils import murmurhash3_32

from ..datamodel import Tweet, User
from .base import Embedder, Embedding

logger = logging.getLogger(__name__)

CLS = "[CLS]"
SEP = "[SEP]"
_SEPARATORS = {CLS.lower(), SEP.lower()}
_TOKEN_PATTERN = re.compile(r"\[cls\]|\[sep\]|[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, then split on whitespace and punctuation; [CLS]/[SEP] survive as tokens."""
    return _TOKEN_PATTERN.findall(text.lower())


def user_sequence(user: User, tweets: Sequence[Tweet]) -> str:
    """[CLS] description [SEP] tweet_1 [SEP] ... tweet_n [SEP]"""
    parts = [CLS, user.description, SEP]
    for tweet in tweets:
        parts.extend([tweet.text, SEP])
    return " ".join(parts)


class HashingEmbedder(Embedder):
    """
    Hash each token into ``dim`` signed buckets, average over tokens and
    L2-normalize.

    The sign and bucket come from one seeded 32-bit murmur hash, the same
    scheme scikit-learn's FeatureHasher uses.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, tuple[int, float]] = {}

    def _bucket(self, token: str) -> tuple[int, float]:
        hit = self._cache.get(token)
        if hit is None:
            h = murmurhash3_32(token, seed=self.seed)
            hit = (abs(h) % self.dim, 1.0 if h >= 0 else -1.0)
            self._cache[token] = hit
        return hit

    def embed_tokens(self, tokens: Sequence[str]) -> Embedding:
        if not any(tok not in _SEPARATORS for tok in tokens):
            return self.zero()

        vector = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            index, sign = self._bucket(token)
            vector[index] += sign
        vector /= len(tokens)

        norm = np.linalg.norm(vector)
        if norm == 0:
            # Signed collisions cancelled out exactly.
            logger.warning(f"Hashed tokens cancelled to a zero vector ({len(tokens)} tokens)")
            return self.zero()
        return Embedding(vector=vector / norm)

    def embed_user(self, user: User, tweets: Sequence[Tweet]) -> Embedding:
        embedding = self.embed_tokens(tokenize(user_sequence(user, tweets)))
        if embedding.degenerate:
            logger.warning(f"User {user.id} has no content tokens; using a zero vector")
        return embedding

    def embed_tweet(self, tweet: Tweet) -> Embedding:
        return self.embed_tokens(tokenize(tweet.text))
