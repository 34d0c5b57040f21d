"""Core domain types and the heterogeneous user/tweet graph builder."""

import logging
from collections.abc import Collection, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .errors import GraphError

logger = logging.getLogger(__name__)


class StanceLabel(str, Enum):
    """Stance of a user toward a target."""

    FAVOR = "favor"
    AGAINST = "against"
    NONE = "none"

    @property
    def index(self) -> int:
        """Column of this label in logits and confusion matrices."""
        return LABEL_ORDER.index(self)

    @classmethod
    def from_index(cls, index: int) -> "StanceLabel":
        return LABEL_ORDER[index]


# Logit/confusion order. Tie-break priority for argmax is TIE_BREAK_ORDER.
LABEL_ORDER: tuple[StanceLabel, ...] = (StanceLabel.FAVOR, StanceLabel.AGAINST, StanceLabel.NONE)
TIE_BREAK_ORDER: tuple[StanceLabel, ...] = (StanceLabel.AGAINST, StanceLabel.FAVOR, StanceLabel.NONE)


class Role(str, Enum):
    """Position of a user in the follow network."""

    FOLLOWEE = "followee"
    FOLLOWER = "follower"
    ISOLATED = "isolated"


class RelationKind(str, Enum):
    """Typed edge relations of the social graph."""

    OWN_TWEET = "own_tweet"
    FOLLOWEE_TWEET = "followee_tweet"
    SELF_LOOP = "self_loop"


RELATION_ORDER: tuple[RelationKind, ...] = tuple(RelationKind)


def normalize_target(name: str) -> str:
    """Lowercase and strip a stance target name."""
    normalized = name.strip().lower()
    if not normalized:
        raise ValueError("target name must be non-empty")
    return normalized


class Tweet(BaseModel):
    """A single tweet."""

    model_config = ConfigDict(frozen=True)

    id: str
    author_id: str
    text: str
    degenerate: bool = False

    @model_validator(mode="after")
    def _empty_text_needs_flag(self) -> "Tweet":
        if not self.text.strip() and not self.degenerate:
            raise ValueError(f"tweet {self.id} has empty text but is not flagged degenerate")
        return self


class User(BaseModel):
    """A user with own tweets, followees and an optional gold stance."""

    model_config = ConfigDict(frozen=True)

    id: str
    description: str = ""
    tweet_ids: tuple[str, ...] = ()
    followee_ids: tuple[str, ...] = ()
    role: Role = Role.ISOLATED
    label: StanceLabel | None = None
    target: str

    @field_validator("target")
    @classmethod
    def _normalize_target(cls, value: str) -> str:
        return normalize_target(value)

    @model_validator(mode="after")
    def _isolated_has_no_followees(self) -> "User":
        if self.role == Role.ISOLATED and self.followee_ids:
            raise ValueError(f"isolated user {self.id} cannot have followees")
        return self


class Corpus:
    """Users and tweets with id lookups."""

    def __init__(self, users: Sequence[User], tweets: Sequence[Tweet]):
        self.users: list[User] = list(users)
        self.tweets: list[Tweet] = list(tweets)
        self._users = {u.id: u for u in self.users}
        self._tweets = {t.id: t for t in self.tweets}

    def user(self, user_id: str) -> User:
        """Look up a user by id; raises KeyError if absent."""
        return self._users[user_id]

    def tweet(self, tweet_id: str) -> Tweet:
        """Look up a tweet by id; raises KeyError if absent."""
        return self._tweets[tweet_id]

    def has_user(self, user_id: str) -> bool:
        return user_id in self._users

    @property
    def targets(self) -> list[str]:
        return sorted({u.target for u in self.users})

    def own_tweets(self, user: User) -> list[Tweet]:
        """A user's tweets in stored order."""
        return [self._tweets[tid] for tid in user.tweet_ids]

    def followee_tweets(self, user: User) -> list[tuple[str, Tweet]]:
        """(followee_id, tweet) pairs in followee order, then tweet order."""
        pairs: list[tuple[str, Tweet]] = []
        for followee_id in user.followee_ids:
            followee = self._users[followee_id]
            pairs.extend((followee_id, t) for t in self.own_tweets(followee))
        return pairs

    def users_for(self, targets: Iterable[str]) -> list[User]:
        wanted = {normalize_target(t) for t in targets}
        return [u for u in self.users if u.target in wanted]

    def labeled_users(self, target: str) -> list[User]:
        target = normalize_target(target)
        return [u for u in self.users if u.target == target and u.label is not None]


class TweetNode(NamedTuple):
    """A tweet attached to one user; shared tweets appear once per attachment."""

    tweet_id: str
    user_id: str
    kind: RelationKind


class Edge(NamedTuple):
    src: int
    dst: int
    kind: RelationKind


def tweet_node_key(tweet_id: str, user_id: str) -> str:
    return f"{tweet_id}@{user_id}"


@dataclass(frozen=True)
class SocialGraph:
    """Directed heterogeneous graph: tweet -> user edges plus user self-loops.

    Users occupy node indices ``0..num_users-1`` sorted by id; tweet nodes
    follow, sorted by ``(user_id, tweet_id)``.
    """

    user_ids: tuple[str, ...]
    tweet_nodes: tuple[TweetNode, ...]
    edges: tuple[Edge, ...]
    node_index: Mapping[str, int] = field(repr=False)

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def num_nodes(self) -> int:
        return len(self.user_ids) + len(self.tweet_nodes)

    def user_index(self, user_id: str) -> int:
        return self.node_index[user_id]

    @cached_property
    def content_ids(self) -> tuple[str, ...]:
        """Per node, the id whose content fills its feature row."""
        return self.user_ids + tuple(n.tweet_id for n in self.tweet_nodes)

    @cached_property
    def attachment(self) -> np.ndarray:
        """Per node, the user index it belongs to (users map to themselves)."""
        owners = [self.node_index[n.user_id] for n in self.tweet_nodes]
        return np.array(list(range(self.num_users)) + owners, dtype=np.int64)

    @cached_property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(src, dst, relation position in RELATION_ORDER) as int arrays."""
        src = np.array([e.src for e in self.edges], dtype=np.int64)
        dst = np.array([e.dst for e in self.edges], dtype=np.int64)
        kind = np.array([RELATION_ORDER.index(e.kind) for e in self.edges], dtype=np.int64)
        return src, dst, kind

    def nodes_of_users(self, user_indices: Iterable[int]) -> np.ndarray:
        """Sorted node indices of the given users and every tweet attached to them."""
        wanted = np.asarray(sorted(set(int(i) for i in user_indices)), dtype=np.int64)
        return np.flatnonzero(np.isin(self.attachment, wanted))


def build_graph(
    users: Sequence[User],
    own_tweets: Sequence[Tweet],
    retained_followee_tweets: Mapping[str, Sequence[Tweet]],
    known_user_ids: Collection[str] | None = None,
) -> SocialGraph:
    """
    Build the user/tweet graph.

    Own tweets attach to their author via OWN_TWEET, retained followee tweets
    attach to the follower via FOLLOWEE_TWEET (one node per follower), and
    every user gets one SELF_LOOP. Follow relations are not edges.

    Args:
        users: Users that become graph nodes.
        own_tweets: Tweets authored by those users.
        retained_followee_tweets: Per follower id, the followee tweets kept by the relevance filter.
        known_user_ids: Ids a followee reference may resolve to. Defaults to the ids in ``users``;
            pass the whole corpus when ``users`` is a subset.

    Raises:
        GraphError: on dangling ids or a duplicate (tweet, user) attachment.
    """
    user_by_id: dict[str, User] = {}
    for user in users:
        if user.id in user_by_id:
            raise GraphError(f"duplicate user {user.id}", ref_id=user.id)
        user_by_id[user.id] = user
    known = set(user_by_id) if known_user_ids is None else set(known_user_ids) | set(user_by_id)

    for user in users:
        for followee_id in user.followee_ids:
            if followee_id not in known:
                raise GraphError(f"dangling user {followee_id}", ref_id=followee_id)

    tweet_by_id: dict[str, Tweet] = {}
    for tweet in own_tweets:
        if tweet.id in tweet_by_id:
            raise GraphError(f"duplicate tweet node {tweet.id} for user {tweet.author_id}", ref_id=tweet.id)
        if tweet.author_id not in user_by_id:
            raise GraphError(f"dangling user {tweet.author_id}", ref_id=tweet.author_id)
        tweet_by_id[tweet.id] = tweet

    attachments: dict[tuple[str, str], RelationKind] = {}
    for user in users:
        for tid in user.tweet_ids:
            if tid not in tweet_by_id:
                raise GraphError(f"dangling tweet {tid}", ref_id=tid)
    for tweet in own_tweets:
        attachments[(tweet.author_id, tweet.id)] = RelationKind.OWN_TWEET

    for user_id, tweets in retained_followee_tweets.items():
        if user_id not in user_by_id:
            raise GraphError(f"dangling user {user_id}", ref_id=user_id)
        for tweet in tweets:
            key = (user_id, tweet.id)
            if key in attachments:
                raise GraphError(f"duplicate tweet node {tweet.id} for user {user_id}", ref_id=tweet.id)
            if tweet.author_id not in known:
                raise GraphError(f"dangling user {tweet.author_id}", ref_id=tweet.author_id)
            if tweet.author_id not in user_by_id[user_id].followee_ids:
                raise GraphError(
                    f"retained tweet {tweet.id} of {tweet.author_id} is not from a followee of {user_id}",
                    ref_id=tweet.author_id,
                )
            attachments[key] = RelationKind.FOLLOWEE_TWEET

    user_ids = tuple(sorted(user_by_id))
    node_index: dict[str, int] = {uid: i for i, uid in enumerate(user_ids)}

    tweet_nodes: list[TweetNode] = []
    edges: list[Edge] = []
    for (user_id, tweet_id), kind in sorted(attachments.items()):
        idx = len(user_ids) + len(tweet_nodes)
        tweet_nodes.append(TweetNode(tweet_id, user_id, kind))
        node_index[tweet_node_key(tweet_id, user_id)] = idx
        edges.append(Edge(idx, node_index[user_id], kind))
    edges.extend(Edge(i, i, RelationKind.SELF_LOOP) for i in range(len(user_ids)))

    logger.debug(
        f"Built graph with {len(user_ids)} users, {len(tweet_nodes)} tweet nodes, {len(edges)} edges"
    )
    return SocialGraph(
        user_ids=user_ids,
        tweet_nodes=tuple(tweet_nodes),
        edges=tuple(edges),
        node_index=node_index,
    )
