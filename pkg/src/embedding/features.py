"""Node feature matrix assembly in graph node order."""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ..datamodel import Corpus, SocialGraph
from ..errors import EmbeddingError
from .base import Embedder, Embedding

logger = logging.getLogger(__name__)


class FeatureMatrix(BaseModel):
    """n x d node embeddings; row i belongs to graph node i."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    degenerate: np.ndarray

    @model_validator(mode="after")
    def _finite_2d(self) -> "FeatureMatrix":
        if self.values.ndim != 2:
            raise EmbeddingError(f"feature matrix must be 2-D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise EmbeddingError("feature matrix has non-finite entries")
        return self

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def assemble_feature_matrix(graph: SocialGraph, corpus: Corpus, embedder: Embedder) -> FeatureMatrix:
    """
    Embed every graph node: users from description + own tweets, tweet nodes
    from their text. Duplicated tweet nodes share one embedding.
    """
    values = np.zeros((graph.num_nodes, embedder.dim), dtype=np.float64)
    degenerate = np.zeros(graph.num_nodes, dtype=bool)

    for i, user_id in enumerate(graph.user_ids):
        user = corpus.user(user_id)
        _fill(values, degenerate, i, embedder.embed_user(user, corpus.own_tweets(user)), embedder.dim)

    tweet_cache: dict[str, Embedding] = {}
    for offset, node in enumerate(graph.tweet_nodes):
        embedding = tweet_cache.get(node.tweet_id)
        if embedding is None:
            embedding = embedder.embed_tweet(corpus.tweet(node.tweet_id))
            tweet_cache[node.tweet_id] = embedding
        _fill(values, degenerate, graph.num_users + offset, embedding, embedder.dim)

    logger.info(
        f"Assembled {values.shape[0]}x{values.shape[1]} feature matrix "
        f"({int(degenerate.sum())} degenerate rows)"
    )
    return FeatureMatrix(values=values, degenerate=degenerate)


def _fill(values: np.ndarray, degenerate: np.ndarray, row: int, embedding: Embedding, dim: int) -> None:
    if embedding.vector.shape != (dim,):
        raise EmbeddingError(f"embedding width {embedding.vector.shape} does not match dim {dim}")
    values[row] = embedding.vector
    degenerate[row] = embedding.degenerate
