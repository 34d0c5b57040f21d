"""Abstract base class for embedders."""

from abc import ABC, abstractmethod
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..datamodel import Tweet, User


class Embedding(BaseModel):
    """A fixed-width vector; degenerate vectors are all-zero placeholders."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    vector: np.ndarray
    degenerate: bool = False


class Embedder(ABC):
    """Turns users and tweets into fixed-width real vectors."""

    dim: int

    @abstractmethod
    def embed_user(self, user: User, tweets: Sequence[Tweet]) -> Embedding:
        """
        Embed a user from the profile description and own tweets.

        Args:
            user: The user.
            tweets: The user's own tweets in stored order.
        """

    @abstractmethod
    def embed_tweet(self, tweet: Tweet) -> Embedding:
        """Embed a single tweet."""

    def zero(self) -> Embedding:
        return Embedding(vector=np.zeros(self.dim, dtype=np.float64), degenerate=True)
