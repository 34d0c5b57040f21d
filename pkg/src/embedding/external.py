"""Embedder backed by a precomputed vector table."""

import json
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from ..datamodel import Tweet, User
from ..errors import EmbeddingError
from .base import Embedder, Embedding

logger = logging.getLogger(__name__)


def load_embedding_table(path: str | Path, dim: int | None = None) -> dict[str, np.ndarray]:
    """
    Read a line-delimited table of ``{"node_id": ..., "vector": [...]}`` records.

    Raises:
        EmbeddingError: on malformed lines, duplicate ids, width mismatches or non-finite values.
    """
    path = Path(path)
    table: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                node_id = str(record["node_id"])
                vector = np.asarray(record["vector"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise EmbeddingError(f"malformed embedding record at line {line_no}: {e}")
            if node_id in table:
                raise EmbeddingError(f"duplicate embedding for {node_id}", ref_id=node_id)
            if vector.ndim != 1 or (dim is not None and vector.shape[0] != dim):
                raise EmbeddingError(
                    f"embedding for {node_id} has shape {vector.shape}, expected ({dim},)", ref_id=node_id
                )
            if not np.all(np.isfinite(vector)):
                raise EmbeddingError(f"embedding for {node_id} has non-finite values", ref_id=node_id)
            table[node_id] = vector
    logger.info(f"Loaded {len(table)} embeddings from {path}")
    return table


def write_embedding_table(rows: Iterable[tuple[str, np.ndarray]], path: str | Path) -> None:
    """Write ``(node_id, vector)`` rows; floats use repr so they round-trip exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for node_id, vector in rows:
            f.write(json.dumps({"node_id": node_id, "vector": [float(v) for v in vector]}) + "\n")


class ExternalEmbedder(Embedder):
    """Look up users by user id and tweets by tweet id."""

    def __init__(self, table: dict[str, np.ndarray], dim: int):
        self.dim = dim
        self._table = table

    @classmethod
    def from_file(cls, path: str | Path, dim: int) -> "ExternalEmbedder":
        return cls(load_embedding_table(path, dim), dim)

    def _lookup(self, node_id: str) -> Embedding:
        vector = self._table.get(node_id)
        if vector is None:
            raise EmbeddingError(f"no embedding for {node_id}", ref_id=node_id)
        return Embedding(vector=vector, degenerate=not bool(np.any(vector)))

    def embed_user(self, user: User, tweets: Sequence[Tweet]) -> Embedding:
        return self._lookup(user.id)

    def embed_tweet(self, tweet: Tweet) -> Embedding:
        return self._lookup(tweet.id)
