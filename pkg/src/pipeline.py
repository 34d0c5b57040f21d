"""Stage wiring shared by the CLI and the experiment runner."""

import asyncio
import json
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError

from .config import FilterStrategy, PipelineConfig
from .datamodel import Corpus, SocialGraph, StanceLabel, User, build_graph
from .embedding import FeatureMatrix, assemble_feature_matrix, create_embedder
from .errors import StageError
from .ingestion import load_corpus
from .relevance import (
    ChatCompletionsClient,
    FilterReport,
    LlmClient,
    ScriptedLlmClient,
    VerdictCache,
    filter_users_cosine,
    filter_users_llm,
    retained_followee_tweets,
)

logger = logging.getLogger(__name__)


def load_inputs(config: PipelineConfig) -> Corpus:
    """Load the corpus named by ``config.paths``."""
    paths = config.paths
    for path in (paths.users, paths.tweets, paths.edges):
        if not path.exists():
            raise StageError(f"missing corpus file {path}", stage="ingest")
    users, tweets = load_corpus(paths.users, paths.tweets, paths.edges)
    return Corpus(users, tweets)


def make_llm_client(config: PipelineConfig, strategy: FilterStrategy) -> LlmClient:
    """Client for the llm or mock strategy."""
    if strategy == "llm":
        return ChatCompletionsClient(config.filter.effective_endpoint)
    mock_table = config.paths.mock_table
    if mock_table is None or not mock_table.exists():
        raise StageError(f"mock strategy needs a scripted response table, got {mock_table}", stage="filter")
    return ScriptedLlmClient.from_file(mock_table)


def run_filter(
    config: PipelineConfig,
    corpus: Corpus,
    users: Sequence[User],
    strategy: FilterStrategy | None = None,
    client: LlmClient | None = None,
) -> dict[str, FilterReport] | None:
    """
    Score followee tweets of ``users`` with the configured strategy.

    Returns None for strategy "off", meaning every followee tweet is kept.
    """
    strategy = strategy or config.filter.strategy
    if strategy == "off":
        logger.info("Relevance filter off; keeping every followee tweet")
        return None
    if strategy == "cosine":
        return filter_users_cosine(corpus, users, create_embedder(config.embedder))

    client = client or make_llm_client(config, strategy)
    endpoint = config.filter.effective_endpoint
    cache = VerdictCache(config.paths.cache) if config.paths.cache is not None else None
    return asyncio.run(
        filter_users_llm(
            corpus,
            users,
            client,
            max_tweets_per_prompt=endpoint.max_tweets_per_prompt,
            concurrency=endpoint.concurrency,
            cache=cache,
        )
    )


def save_filter_reports(reports: Mapping[str, FilterReport], path: str | Path) -> None:
    """Write RFT records: {user_id, provenance, scores, retained}, sorted by user."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for user_id in sorted(reports):
            report = reports[user_id]
            record = {
                "user_id": report.user_id,
                "provenance": report.provenance,
                "scores": {tid: int(s) for tid, s in report.scores.items()},
                "retained": report.retained,
            }
            f.write(json.dumps(record) + "\n")


def load_filter_reports(path: str | Path) -> dict[str, FilterReport]:
    """
    Read the relevance output written by the filter stage.

    Raises:
        StageError: if the file is missing or a line is not a valid report.
    """
    path = Path(path)
    if not path.exists():
        raise StageError(f"missing relevance filter output {path}", stage="filter")
    reports: dict[str, FilterReport] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                record.pop("retained", None)
                report = FilterReport.model_validate(record)
            except (json.JSONDecodeError, AttributeError, ValidationError) as e:
                raise StageError(f"corrupt relevance filter output {path} at line {line_no}: {e}", stage="filter") from e
            reports[report.user_id] = report
    return reports


class GraphContext(BaseModel):
    """A built graph with its feature matrix and gold labels."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    graph: SocialGraph
    features: FeatureMatrix
    labels: dict[str, StanceLabel]


def scope_users(corpus: Corpus, targets: Sequence[str]) -> list[User]:
    users = corpus.users_for(targets)
    if not users:
        raise StageError(f"no users for targets {list(targets)}", stage="ingest")
    return users


def build_context(
    config: PipelineConfig,
    corpus: Corpus,
    users: Sequence[User],
    reports: Mapping[str, FilterReport] | None,
) -> GraphContext:
    """Graph over ``users`` with retained followee tweets, plus node features."""
    own = [t for user in users for t in corpus.own_tweets(user)]
    graph = build_graph(
        users, own, retained_followee_tweets(corpus, users, reports), known_user_ids=[u.id for u in corpus.users]
    )
    features = assemble_feature_matrix(graph, corpus, create_embedder(config.embedder))
    labels = {u.id: u.label for u in users if u.label is not None}
    logger.info(
        f"Graph: {graph.num_users} users, {len(graph.tweet_nodes)} tweet nodes, "
        f"{len(graph.edges)} edges, {features.cols} feature dims"
    )
    return GraphContext(graph=graph, features=features, labels=labels)
