"""Shared fixtures: a tiny hand-built corpus and the mock chat-completions app."""

import importlib.util
from pathlib import Path

import pytest

from src.config import EmbedderSpec, ExperimentSpec, FilterConfig, GsiConfig, PathsConfig, PipelineConfig, SynthSpec
from src.datamodel import Corpus, Role, SocialGraph, StanceLabel, Tweet, User, build_graph
from src.synth import generate, write_synth

ROOT = Path(__file__).resolve().parent.parent


def make_user(
    user_id: str,
    tweet_ids: tuple[str, ...] = (),
    followee_ids: tuple[str, ...] = (),
    label: StanceLabel | None = StanceLabel.FAVOR,
    role: Role | None = None,
    target: str = "biden",
    description: str = "",
) -> User:
    if role is None:
        role = Role.FOLLOWER if followee_ids else Role.ISOLATED
    return User(
        id=user_id,
        description=description,
        tweet_ids=tweet_ids,
        followee_ids=followee_ids,
        role=role,
        label=label,
        target=target,
    )


def make_tweet(tweet_id: str, author_id: str, text: str | None = None) -> Tweet:
    return Tweet(id=tweet_id, author_id=author_id, text=text or f"tweet {tweet_id} by {author_id}")


@pytest.fixture
def small_corpus() -> Corpus:
    """A follows B and C; B and C are followees; D is isolated."""
    users = [
        make_user("A", ("a1",), ("B", "C"), StanceLabel.FAVOR, Role.FOLLOWER),
        make_user("B", ("b1", "b2"), (), StanceLabel.FAVOR, Role.FOLLOWEE),
        make_user("C", ("c1",), (), StanceLabel.AGAINST, Role.FOLLOWEE),
        make_user("D", ("d1",), (), StanceLabel.NONE, Role.ISOLATED),
    ]
    tweets = [
        make_tweet("a1", "A", "biden economy plan is great"),
        make_tweet("b1", "B", "the biden economy plan works"),
        make_tweet("b2", "B", "my cat likes sunshine"),
        make_tweet("c1", "C", "biden plan is a disaster"),
        make_tweet("d1", "D", "nothing to say"),
    ]
    return Corpus(users, tweets)


@pytest.fixture(scope="session")
def mock_llm_app():
    """The FastAPI app from mock-llm/app.py (its directory name is not importable)."""
    spec = importlib.util.spec_from_file_location("mock_llm_app", ROOT / "mock-llm" / "app.py")
    assert spec is not None and spec.loader is not None
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module.app


def random_graph(rng, n_users: int, max_tweets: int = 3) -> SocialGraph:
    """Users with random own tweets; each even-numbered user follows the next and retains one of its tweets."""
    users, tweets, retained = [], [], {}
    by_author: dict[str, list[Tweet]] = {}
    for i in range(n_users):
        uid = f"u{i:02d}"
        tids = tuple(f"t{i}_{k}" for k in range(int(rng.integers(0, max_tweets + 1))))
        by_author[uid] = [make_tweet(t, uid) for t in tids]
        tweets.extend(by_author[uid])
    for i in range(n_users):
        uid = f"u{i:02d}"
        follows = i % 2 == 0 and i + 1 < n_users
        followee_ids = (f"u{i + 1:02d}",) if follows else ()
        role = Role.FOLLOWEE if i % 2 == 1 else None
        users.append(make_user(uid, tuple(t.id for t in by_author[uid]), followee_ids, role=role))
        if follows and by_author[followee_ids[0]]:
            retained[uid] = by_author[followee_ids[0]][:1]
    return build_graph(users, tweets, retained)


def write_tiny_synth(directory: Path, **synth_overrides) -> PipelineConfig:
    """Generate a small synthetic corpus under ``directory`` and a fast config that reads it."""
    spec = SynthSpec(
        **{"n_users": 60, "dim": 16, "followees_per_user": (1, 3), "tweets_per_user": (1, 3), "seed": 0, **synth_overrides}
    )
    files = write_synth(generate(spec), directory / "data")
    return PipelineConfig(
        paths=PathsConfig(corpus_dir=directory / "data", mock_table=files["mock_table"], out_dir=directory / "out"),
        embedder=EmbedderSpec(kind="external", dim=spec.dim, path=files["embeddings"]),
        filter=FilterConfig(strategy="mock"),
        gsi=GsiConfig(hidden_dim=8, epochs=3, patience=3, learning_rate=0.01),
        experiment=ExperimentSpec(seeds=[0, 1], r_values=[0.3]),
        synth=spec,
    )
