"""Embedders that turn users and tweets into node features."""

from collections.abc import Sequence

from ..config import EmbedderSpec
from ..datamodel import Tweet, User
from .base import Embedder, Embedding
from .external import ExternalEmbedder, load_embedding_table, write_embedding_table
from .features import FeatureMatrix, assemble_feature_matrix
from .hashing import HashingEmbedder

_embedders: dict[tuple, Embedder] = {}


def create_embedder(spec: EmbedderSpec) -> Embedder:
    """Create (or reuse) the embedder an EmbedderSpec describes."""
    key = (spec.kind, spec.width, spec.seed, str(spec.path))
    embedder = _embedders.get(key)
    if embedder is None:
        if spec.kind == "external":
            assert spec.path is not None
            embedder = ExternalEmbedder.from_file(spec.path, spec.width)
        else:
            embedder = HashingEmbedder(dim=spec.width, seed=spec.seed)
        _embedders[key] = embedder
    return embedder


def embed_user(user: User, tweets: Sequence[Tweet], spec: EmbedderSpec) -> Embedding:
    return create_embedder(spec).embed_user(user, tweets)


def embed_tweet(tweet: Tweet, spec: EmbedderSpec) -> Embedding:
    return create_embedder(spec).embed_tweet(tweet)


__all__ = [
    "Embedder",
    "Embedding",
    "ExternalEmbedder",
    "FeatureMatrix",
    "HashingEmbedder",
    "assemble_feature_matrix",
    "create_embedder",
    "embed_tweet",
    "embed_user",
    "load_embedding_table",
    "write_embedding_table",
]
