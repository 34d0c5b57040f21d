"""Graph-propagated mutual-information feature ranking."""

import json
import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field, model_validator
from sklearn.metrics import mutual_info_score
from sklearn.preprocessing import normalize

from .datamodel import SocialGraph, StanceLabel
from .errors import RankingError

logger = logging.getLogger(__name__)

DEFAULT_BINS = 16


class FmiRanking(BaseModel):
    """Feature dimensions sorted by descending informativeness."""

    order: list[int]
    scores: list[float]
    computed_on: str = ""
    bins: int = Field(default=DEFAULT_BINS, ge=2)
    target: str = ""
    seed: int | None = None

    @model_validator(mode="after")
    def _check_permutation(self) -> "FmiRanking":
        if sorted(self.order) != list(range(len(self.scores))):
            raise ValueError("order must be a permutation of the score indices")
        return self

    @property
    def dim(self) -> int:
        return len(self.order)


def normalize_adjacency(graph: SocialGraph, nodes: np.ndarray | None = None) -> sp.csr_matrix:
    """
    Row-stochastic adjacency over incoming edges: A[i, j] = 1/indeg(i) for j -> i.

    With ``nodes`` the matrix covers only the induced subgraph, indexed by
    position in ``nodes``. Rows of nodes with no incoming edge are zero.
    """
    src, dst, _ = graph.edge_arrays
    if nodes is None:
        n = graph.num_nodes
    else:
        n = len(nodes)
        position = np.full(graph.num_nodes, -1, dtype=np.int64)
        position[nodes] = np.arange(n)
        keep = (position[src] >= 0) & (position[dst] >= 0)
        src, dst = position[src[keep]], position[dst[keep]]

    counts = sp.coo_matrix((np.ones(len(src)), (dst, src)), shape=(n, n)).tocsr()
    return normalize(counts, norm="l1", axis=1).tocsr()


def propagate(adj: sp.spmatrix, X: np.ndarray) -> np.ndarray:
    """One propagation hop: A @ X."""
    if adj.shape[1] != X.shape[0]:
        raise RankingError(f"adjacency has {adj.shape[1]} columns but features have {X.shape[0]} rows")
    return np.asarray(adj @ X)


def equal_frequency_bins(column: np.ndarray, bins: int) -> np.ndarray:
    """
    Bucket ids from equal-frequency edges; repeated edges collapse, so a
    column may use fewer than ``bins`` buckets. Bucket b holds (e_b, e_{b+1}].
    """
    edges = np.quantile(column, np.linspace(0.0, 1.0, bins + 1), method="inverted_cdf")
    interior = np.unique(edges[1:-1])
    return np.searchsorted(interior, column, side="left")


def _label_codes(labels: Sequence[StanceLabel] | np.ndarray) -> np.ndarray:
    if isinstance(labels, np.ndarray):
        return labels.astype(np.int64)
    return np.array([StanceLabel(l).index for l in labels], dtype=np.int64)


def mutual_information(labels: Sequence[StanceLabel] | np.ndarray, column: np.ndarray, bins: int = DEFAULT_BINS) -> float:
    """Plug-in mutual information (nats) between labels and the binned column."""
    codes = _label_codes(labels)
    if len(codes) != len(column):
        raise RankingError(f"{len(codes)} labels for a column of length {len(column)}")
    buckets = equal_frequency_bins(np.asarray(column, dtype=np.float64), bins)
    return max(0.0, float(mutual_info_score(codes, buckets)))


def rank_tfi(
    graph: SocialGraph,
    X: np.ndarray,
    train_user_indices: Sequence[int],
    train_labels: Sequence[StanceLabel],
    bins: int = DEFAULT_BINS,
    computed_on: str = "",
) -> FmiRanking:
    """
    Rank feature dimensions by MI between propagated features and labels.

    Propagation runs on the subgraph of the training users and their attached
    tweet nodes, so no other node's features reach the score.

    Args:
        graph: The social graph X is indexed by.
        X: n x d node features in graph node order.
        train_user_indices: Node indices of the training users.
        train_labels: Gold labels aligned with ``train_user_indices``.
        bins: Equal-frequency bin count.
        computed_on: Identifier of the split, stored on the ranking.

    Raises:
        RankingError: with fewer than 2 training users or misaligned inputs.
    """
    train = np.asarray(train_user_indices, dtype=np.int64)
    if len(train) < 2:
        raise RankingError(f"need at least 2 training users, got {len(train)}")
    if len(train_labels) != len(train):
        raise RankingError("train labels and indices differ in length")
    if X.shape[0] != graph.num_nodes:
        raise RankingError(f"features have {X.shape[0]} rows for {graph.num_nodes} nodes")
    if np.any(train >= graph.num_users):
        raise RankingError("training indices must be user nodes")

    nodes = graph.nodes_of_users(train)
    smoothed = propagate(normalize_adjacency(graph, nodes), X[nodes])
    rows = smoothed[np.searchsorted(nodes, train)]

    codes = _label_codes(train_labels)
    scores = np.array([mutual_information(codes, rows[:, m], bins) for m in range(X.shape[1])])
    order = np.lexsort((np.arange(len(scores)), -scores))

    logger.info(
        f"Ranked {len(scores)} dims on {len(train)} training users "
        f"(top MI {scores[order[0]]:.4f} nats, bins={bins})"
    )
    return FmiRanking(order=order.tolist(), scores=scores.tolist(), computed_on=computed_on, bins=bins)


def top_k(d: int, r: float) -> int:
    """Number of graph-favored dims: max(1, round(r * d)), halves rounded up."""
    return max(1, int(np.floor(r * d + 0.5)))


def split_features(X: np.ndarray, ranking: FmiRanking, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Columns of the top-ranked dims, and the rest, both in ranking order."""
    if not 0 < r < 1:
        raise RankingError(f"r must lie in (0, 1), got {r}")
    if X.shape[1] != ranking.dim:
        raise RankingError(f"features have {X.shape[1]} dims, ranking has {ranking.dim}")
    k = top_k(ranking.dim, r)
    return X[:, ranking.order[:k]], X[:, ranking.order[k:]]


def save_ranking(ranking: FmiRanking, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(ranking.model_dump(), indent=2) + "\n", encoding="utf-8")


def load_ranking(path: str | Path) -> FmiRanking:
    return FmiRanking.model_validate_json(Path(path).read_text(encoding="utf-8"))
