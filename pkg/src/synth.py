"""Synthetic labeled social corpora with planted graph/content feature structure."""

import itertools
import json
import logging
from collections import Counter
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict

from .config import SynthSpec
from .datamodel import LABEL_ORDER, Corpus, Role, StanceLabel, Tweet, User, build_graph
from .embedding import ExternalEmbedder, assemble_feature_matrix, write_embedding_table
from .errors import SynthError
from .ingestion import save_corpus, split_dataset
from .relevance import ScriptedResponse
from .tfi import rank_tfi, top_k

logger = logging.getLogger(__name__)

SALAD_WORDS = (
    "weather", "recipe", "garden", "football", "coffee", "traffic", "movie", "concert",
    "puppy", "sunset", "laptop", "vacation", "bakery", "museum", "guitar", "marathon",
)


class PlantedMeta(BaseModel):
    """Which embedding dims carry neighborhood signal and which carry own-label signal."""

    graph_dims: list[int]
    content_dims: list[int]
    spec: SynthSpec


class SynthCorpus(BaseModel):
    """Generator output: corpus records, node vectors and planted ground truth."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    users: list[User]
    tweets: list[Tweet]
    embeddings: dict[str, np.ndarray]
    on_topic: dict[str, bool]
    planted: PlantedMeta
    mock_table: list[ScriptedResponse]

    @property
    def edges(self) -> list[tuple[str, str]]:
        """(follower, followee) pairs."""
        return [(u.id, f) for u in self.users for f in u.followee_ids]

    @property
    def labels(self) -> dict[str, StanceLabel]:
        return {u.id: u.label for u in self.users if u.label is not None}

    def corpus(self) -> Corpus:
        return Corpus(self.users, self.tweets)


def _distinct_prototypes(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Label prototypes in {-1, 1}^dim; on every dim at least one label differs."""
    patterns = np.array([p for p in itertools.product((-1.0, 1.0), repeat=len(LABEL_ORDER)) if len(set(p)) > 1])
    while True:
        prototypes = patterns[rng.integers(0, len(patterns), size=dim)].T
        if len({p.tobytes() for p in prototypes}) == len(LABEL_ORDER):
            return prototypes


def _draw_followees(
    rng: np.random.Generator,
    labels: np.ndarray,
    spec: SynthSpec,
) -> list[list[int]]:
    """Per user, followee indices; each slot picks a same-label user with probability homophily."""
    n = len(labels)
    lo, hi = spec.followees_per_user
    if hi > n - 1:
        raise SynthError(f"followees_per_user upper bound {hi} exceeds n_users - 1 = {n - 1}")

    by_label = [np.flatnonzero(labels == k) for k in range(len(LABEL_ORDER))]
    followees: list[list[int]] = []
    for i in range(n):
        chosen: list[int] = []
        if rng.random() < spec.follow_probability:
            wanted = int(rng.integers(lo, hi + 1))
            taken = {i}
            for _ in range(wanted):
                same = rng.random() < spec.homophily
                if same:
                    pool = by_label[labels[i]]
                else:
                    pool = np.concatenate([by_label[k] for k in range(len(LABEL_ORDER)) if k != labels[i]])
                pool = np.array([j for j in pool if j not in taken], dtype=np.int64)
                # An exhausted pool leaves the slot empty rather than breaking the homophily draw.
                if len(pool) == 0:
                    continue
                pick = int(rng.choice(pool))
                taken.add(pick)
                chosen.append(pick)
        followees.append(chosen)
    return followees


def generate(spec: SynthSpec) -> SynthCorpus:
    """
    Generate a corpus whose user and tweet vectors plant a known structure.

    User vectors carry the user's own label prototype on content dims and the
    majority label of their followees on graph dims. On-topic tweets carry
    their author's prototype on graph dims and noise on content dims;
    ``relevance_noise`` of all tweets are off-topic noise with word-salad
    text. On-topic vectors share a topic offset of norm
    ``topic_strength * sqrt(dim)``.

    Raises:
        SynthError: if the followee range cannot be satisfied.
    """
    rng = np.random.default_rng(spec.seed)
    n, dim = spec.n_users, spec.dim

    labels = rng.choice(len(LABEL_ORDER), size=n, p=np.asarray(spec.label_distribution))
    permutation = rng.permutation(dim)
    n_graph = int(round(spec.graph_fraction * dim))
    graph_dims = sorted(int(d) for d in permutation[:n_graph])
    content_dims = sorted(int(d) for d in permutation[n_graph:])

    prototypes = _distinct_prototypes(rng, dim)
    direction = rng.normal(size=dim)
    topic = spec.topic_strength * np.sqrt(dim) * direction / np.linalg.norm(direction)

    followees = _draw_followees(rng, labels, spec)
    followed = {j for chosen in followees for j in chosen}

    width = len(str(n - 1))
    user_ids = [f"u{i:0{width}d}" for i in range(n)]

    tweets: list[Tweet] = []
    tweet_ids_by_user: list[list[str]] = []
    on_topic: dict[str, bool] = {}
    embeddings: dict[str, np.ndarray] = {}
    t_lo, t_hi = spec.tweets_per_user
    for i in range(n):
        label = StanceLabel.from_index(int(labels[i]))
        ids: list[str] = []
        for _ in range(int(rng.integers(t_lo, t_hi + 1))):
            tweet_id = f"t{len(tweets):07d}"
            relevant = bool(rng.random() >= spec.relevance_noise)
            if relevant:
                text = f"user {i} supports {label.value} on {spec.target}"
                vector = rng.normal(size=dim)
                vector[graph_dims] = prototypes[labels[i], graph_dims] + spec.noise * rng.normal(size=len(graph_dims))
                vector += topic
            else:
                text = " ".join(rng.choice(SALAD_WORDS, size=6))
                vector = rng.normal(size=dim)
            tweets.append(Tweet(id=tweet_id, author_id=user_ids[i], text=text))
            on_topic[tweet_id] = relevant
            embeddings[tweet_id] = vector
            ids.append(tweet_id)
        tweet_ids_by_user.append(ids)

    users: list[User] = []
    for i in range(n):
        vector = topic + spec.noise * rng.normal(size=dim)
        vector[content_dims] += prototypes[labels[i], content_dims]
        if followees[i]:
            majority = Counter(int(labels[j]) for j in followees[i]).most_common(1)[0][0]
            vector[graph_dims] += prototypes[majority, graph_dims]
        embeddings[user_ids[i]] = vector

        if i in followed:
            role = Role.FOLLOWEE
        elif followees[i]:
            role = Role.FOLLOWER
        else:
            role = Role.ISOLATED
        users.append(
            User(
                id=user_ids[i],
                description=f"synthetic user {i}",
                tweet_ids=tuple(tweet_ids_by_user[i]),
                followee_ids=tuple(user_ids[j] for j in followees[i]),
                role=role,
                label=StanceLabel.from_index(int(labels[i])),
                target=spec.target,
            )
        )

    mock_table = [
        ScriptedResponse(
            user_id=user_ids[i],
            scores={tid: 3 if on_topic[tid] else 1 for j in followees[i] for tid in tweet_ids_by_user[j]},
        )
        for i in range(n)
        if followees[i]
    ]

    logger.info(
        f"Generated {n} users, {len(tweets)} tweets, {sum(len(f) for f in followees)} follows "
        f"({len(graph_dims)} graph dims of {dim})"
    )
    return SynthCorpus(
        users=users,
        tweets=tweets,
        embeddings=embeddings,
        on_topic=on_topic,
        planted=PlantedMeta(graph_dims=graph_dims, content_dims=content_dims, spec=spec),
        mock_table=mock_table,
    )


def same_label_fraction(result: SynthCorpus) -> float:
    """Share of follow edges linking users with the same label."""
    labels = result.labels
    edges = result.edges
    if not edges:
        return 0.0
    return sum(labels[a] == labels[b] for a, b in edges) / len(edges)


def write_synth(result: SynthCorpus, directory: str | Path) -> dict[str, Path]:
    """
    Write corpus files, the external embedding table, the scripted LLM table
    and planted metadata into ``directory``.
    """
    directory = Path(directory)
    save_corpus(result.users, result.tweets, directory)
    paths = {
        "users": directory / "users.jsonl",
        "tweets": directory / "tweets.jsonl",
        "edges": directory / "edges.jsonl",
        "embeddings": directory / "embeddings.jsonl",
        "mock_table": directory / "mock_llm.jsonl",
        "planted": directory / "planted.json",
    }
    write_embedding_table(sorted(result.embeddings.items()), paths["embeddings"])
    with open(paths["mock_table"], "w", encoding="utf-8", newline="\n") as f:
        for entry in result.mock_table:
            f.write(entry.model_dump_json(exclude_none=True) + "\n")
    paths["planted"].write_text(json.dumps(result.planted.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
    return paths


class PlantedCheck(BaseModel):
    recovery: float
    top_dims: list[int]
    graph_dims: list[int]
    scores: list[float]


def planted_tfi_check(result: SynthCorpus, r: float | None = None, bins: int = 16, seed: int = 0) -> PlantedCheck:
    """
    Rank dims on a training split of the generated corpus and report the
    share of planted graph dims found in the top-r block.

    The graph keeps exactly the on-topic followee tweets. ``r`` defaults to
    the generator's graph fraction.
    """
    spec = result.planted.spec
    if spec.graph_fraction < 0.2:
        logger.warning(f"Only {spec.graph_fraction:.0%} graph dims planted; recovery is not meaningful")
    corpus = result.corpus()
    retained = {}
    for user in corpus.users:
        kept = [t for _, t in corpus.followee_tweets(user) if result.on_topic[t.id]]
        if kept:
            retained[user.id] = kept
    graph = build_graph(corpus.users, corpus.tweets, retained)
    features = assemble_feature_matrix(graph, corpus, ExternalEmbedder(result.embeddings, spec.dim))

    split = split_dataset(corpus.labeled_users(spec.target), spec.target, seed)
    labels = result.labels
    ranking = rank_tfi(
        graph,
        features.values,
        [graph.user_index(u) for u in split.train],
        [labels[u] for u in split.train],
        bins=bins,
    )
    k = top_k(spec.dim, r if r is not None else max(spec.graph_fraction, 1.0 / spec.dim))
    top = sorted(ranking.order[:k])
    planted = set(result.planted.graph_dims)
    recovery = len(planted & set(top)) / len(planted) if planted else 0.0
    logger.info(f"Planted TFI check: recovered {recovery:.2%} of {len(planted)} graph dims in top {k}")
    return PlantedCheck(recovery=recovery, top_dims=top, graph_dims=sorted(planted), scores=ranking.scores)
