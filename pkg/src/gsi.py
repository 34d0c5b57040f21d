"""Dual-path stance model: relation-typed graph convolution plus an MLP."""

import copy
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, model_validator
from sklearn.preprocessing import normalize
from torch import nn

from .config import GsiConfig, Variant
from .datamodel import LABEL_ORDER, RELATION_ORDER, TIE_BREAK_ORDER, RelationKind, SocialGraph, StanceLabel
from .errors import ModelError, TrainingError
from .evaluation.metrics import compute_metrics
from .tfi import FmiRanking, top_k

logger = logging.getLogger(__name__)

DTYPE = torch.float64
NUM_CLASSES = len(LABEL_ORDER)
CHECKPOINT_VERSION = 1


class FeatureRouting(BaseModel):
    """Which feature dims feed the graph path and which feed the MLP."""

    graph_dims: list[int]
    content_dims: list[int]

    @model_validator(mode="after")
    def _disjoint(self) -> "FeatureRouting":
        if set(self.graph_dims) & set(self.content_dims):
            raise ValueError("graph and content dims overlap")
        if not self.graph_dims and not self.content_dims:
            raise ValueError("routing selects no dims")
        return self

    @classmethod
    def from_ranking(cls, ranking: FmiRanking, r: float, variant: Variant = "full") -> "FeatureRouting":
        """
        Route dims for a variant. ``no_stfi_R`` sends every dim through the
        graph path, ``no_stfi_m`` every dim through the MLP; other variants split
        at the top max(1, round(r*d)) ranked dims.

        Raises:
            ModelError: if r is outside (0, 1).
        """
        if not 0 < r < 1:
            raise ModelError(f"r must lie in (0, 1), got {r}")
        order = list(ranking.order)
        if variant == "no_stfi_R":
            return cls(graph_dims=order, content_dims=[])
        if variant == "no_stfi_m":
            return cls(graph_dims=[], content_dims=order)
        k = top_k(len(order), r)
        return cls(graph_dims=order[:k], content_dims=order[k:])


def relation_adjacency(graph: SocialGraph) -> dict[RelationKind, torch.Tensor]:
    """Per relation, the sparse matrix with A[i, j] = 1/c_{i,rel} for each edge j -> i."""
    src, dst, kind = graph.edge_arrays
    n = graph.num_nodes
    adjacency: dict[RelationKind, torch.Tensor] = {}
    for position, relation in enumerate(RELATION_ORDER):
        mask = kind == position
        counts = sp.coo_matrix((np.ones(int(mask.sum())), (dst[mask], src[mask])), shape=(n, n))
        coo = normalize(counts.tocsr(), norm="l1", axis=1).tocoo()
        indices = torch.from_numpy(np.vstack([coo.row, coo.col]).astype(np.int64))
        adjacency[relation] = torch.sparse_coo_tensor(
            indices, torch.from_numpy(coo.data.astype(np.float64)), (n, n), dtype=DTYPE
        ).coalesce()
    return adjacency


class GsiInputs(BaseModel):
    """Tensors one forward pass needs, prepared once per graph and routing."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    adjacency: dict[RelationKind, torch.Tensor]
    x_graph: torch.Tensor
    x_content: torch.Tensor
    num_users: int


def prepare_inputs(graph: SocialGraph, X: np.ndarray, routing: FeatureRouting) -> GsiInputs:
    """
    Split the node features by routing and build the per-relation adjacency.

    Graph dims cover every node; content dims cover user rows only.

    Raises:
        ModelError: if X does not have one row per graph node.
    """
    if X.shape[0] != graph.num_nodes:
        raise ModelError(f"features have {X.shape[0]} rows for {graph.num_nodes} nodes")
    values = torch.from_numpy(np.ascontiguousarray(X, dtype=np.float64))
    return GsiInputs(
        adjacency=relation_adjacency(graph),
        x_graph=values[:, routing.graph_dims],
        x_content=values[: graph.num_users, routing.content_dims],
        num_users=graph.num_users,
    )


def rgcn_layer(
    adjacency: Mapping[RelationKind, torch.Tensor],
    H: torch.Tensor,
    relation_weights: Mapping[str, torch.Tensor],
    self_weight: torch.Tensor,
    activate: bool = True,
) -> torch.Tensor:
    """
    One relation-typed graph convolution:
    h_i' = act(sum_rel sum_{j in N_i^rel} (1/c_{i,rel}) W_rel h_j + W_0 h_i).

    Weights are (out, in) matrices. There is no bias.
    """
    out = H @ self_weight.T
    for relation, adj in adjacency.items():
        weight = relation_weights[relation.value]
        message = H @ weight.T
        out = out + (torch.sparse.mm(adj, message) if adj.is_sparse else adj @ message)
    return torch.relu(out) if activate else out


class GsiModel(nn.Module):
    """Graph path over routed graph dims, MLP over content dims, linear classifier on the concatenation."""

    def __init__(
        self,
        routing: FeatureRouting,
        hidden_dim: int = 64,
        activate_last: bool = False,
        zero_init_classifier: bool = True,
    ):
        super().__init__()
        self.routing = routing
        self.hidden_dim = hidden_dim
        self.activate_last = activate_last
        graph_in, content_in = len(routing.graph_dims), len(routing.content_dims)

        self.relation_weights = nn.ModuleList()
        self.self_weights = nn.ParameterList()
        if graph_in:
            for in_dim in (graph_in, hidden_dim):
                self.relation_weights.append(
                    nn.ParameterDict({rel.value: _xavier(hidden_dim, in_dim) for rel in RELATION_ORDER})
                )
                self.self_weights.append(_xavier(hidden_dim, in_dim))

        self.mlp: nn.Sequential | None = None
        if content_in:
            self.mlp = nn.Sequential(
                nn.Linear(content_in, hidden_dim, dtype=DTYPE),
                nn.ReLU(),
                nn.Linear(hidden_dim, hidden_dim, dtype=DTYPE),
            )

        width = hidden_dim * (int(graph_in > 0) + int(content_in > 0))
        self.classifier = nn.Linear(width, NUM_CLASSES, dtype=DTYPE)
        if zero_init_classifier:
            nn.init.zeros_(self.classifier.weight)
            nn.init.zeros_(self.classifier.bias)

    @property
    def has_graph_path(self) -> bool:
        return len(self.self_weights) > 0

    def forward(self, inputs: GsiInputs) -> tuple[torch.Tensor, torch.Tensor]:
        """Return (logits for user rows, fused user representation Z)."""
        parts: list[torch.Tensor] = []
        if self.has_graph_path:
            h = inputs.x_graph
            last = len(self.self_weights) - 1
            for layer, (rel_weights, self_weight) in enumerate(zip(self.relation_weights, self.self_weights)):
                activate = layer < last or self.activate_last
                h = rgcn_layer(inputs.adjacency, h, rel_weights, self_weight, activate=activate)
            parts.append(h[: inputs.num_users])
        if self.mlp is not None:
            parts.append(self.mlp(inputs.x_content))
        z = torch.cat(parts, dim=1)
        return self.classifier(z), z


def _xavier(out_dim: int, in_dim: int) -> nn.Parameter:
    weight = torch.empty(out_dim, in_dim, dtype=DTYPE)
    nn.init.xavier_uniform_(weight)
    return nn.Parameter(weight)


def build_model(config: GsiConfig, routing: FeatureRouting) -> GsiModel:
    """Seeded model construction."""
    torch.manual_seed(config.seed)
    return GsiModel(
        routing,
        hidden_dim=config.hidden_dim,
        activate_last=config.activate_last,
        zero_init_classifier=config.zero_init_classifier,
    )


def forward(
    model: GsiModel,
    graph: SocialGraph,
    X: np.ndarray,
    ranking: FmiRanking,
    r: float,
    variant: Variant = "full",
) -> tuple[torch.Tensor, torch.Tensor]:
    """
    Route features by ranking and r, then run the model.

    Raises:
        ModelError: if r is outside (0, 1) or the routing differs from the model's.
    """
    routing = FeatureRouting.from_ranking(ranking, r, variant)
    if routing != model.routing:
        raise ModelError("feature routing does not match the model")
    return model(prepare_inputs(graph, X, routing))


def loss(logits: torch.Tensor, gold: torch.Tensor, class_weights: torch.Tensor | None = None) -> torch.Tensor:
    """Mean cross-entropy of gold label indices."""
    return F.cross_entropy(logits, gold, weight=class_weights)


def gradients(
    model: GsiModel,
    inputs: GsiInputs,
    user_rows: torch.Tensor,
    gold: torch.Tensor,
) -> dict[str, torch.Tensor]:
    """Gradients of the loss on ``user_rows`` for every named parameter."""
    named = list(model.named_parameters())
    logits, _ = model(inputs)
    value = loss(logits[user_rows], gold)
    grads = torch.autograd.grad(value, [p for _, p in named], allow_unused=True)
    return {
        name: grad if grad is not None else torch.zeros_like(param)
        for (name, param), grad in zip(named, grads)
    }


def class_weights_for(gold: torch.Tensor) -> torch.Tensor:
    """Inverse-frequency weights; absent classes get weight 0."""
    counts = torch.bincount(gold, minlength=NUM_CLASSES).to(DTYPE)
    weights = torch.where(counts > 0, counts.sum() / (NUM_CLASSES * counts.clamp(min=1)), torch.zeros_like(counts))
    return weights


def predict_labels(logits: torch.Tensor | np.ndarray) -> list[StanceLabel]:
    """Argmax per row; equal maxima resolve Against, then Favor, then None."""
    values = logits.detach().cpu().numpy() if isinstance(logits, torch.Tensor) else np.asarray(logits)
    columns = [label.index for label in TIE_BREAK_ORDER]
    winners = np.argmax(values[:, columns], axis=1)
    return [TIE_BREAK_ORDER[w] for w in winners]


def predict(
    model: GsiModel,
    graph: SocialGraph,
    inputs: GsiInputs,
    user_ids: Sequence[str],
) -> dict[str, StanceLabel]:
    """
    Predict stances for the given users.

    Raises:
        ModelError: for a user id that is not a user node of ``graph``.
    """
    rows = []
    for user_id in user_ids:
        index = graph.node_index.get(user_id)
        if index is None or index >= graph.num_users:
            raise ModelError(f"unknown user {user_id}")
        rows.append(index)
    model.eval()
    with torch.no_grad():
        logits, _ = model(inputs)
    labels = predict_labels(logits[rows])
    return dict(zip(user_ids, labels))


class EpochLog(BaseModel):
    epoch: int
    train_loss: float
    val_f_avg: float


class TrainResult(BaseModel):
    """The restored best-epoch model and the per-epoch log."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: GsiModel
    log: list[EpochLog]
    best_epoch: int
    best_val_f_avg: float


def train(
    config: GsiConfig,
    graph: SocialGraph,
    X: np.ndarray,
    routing: FeatureRouting,
    labels: Mapping[str, StanceLabel],
    train_ids: Sequence[str],
    val_ids: Sequence[str],
) -> TrainResult:
    """
    Full-graph training with Adam and early stopping on validation F_avg.

    The loss covers training users only. The parameters of the best
    validation epoch are restored before returning.

    Raises:
        TrainingError: if the loss becomes non-finite.
    """
    model = build_model(config, routing)
    inputs = prepare_inputs(graph, X, routing)

    train_rows = torch.tensor([graph.user_index(u) for u in train_ids], dtype=torch.long)
    gold = torch.tensor([labels[u].index for u in train_ids], dtype=torch.long)
    if not val_ids:
        logger.warning("No validation users; selecting epochs on training users")
        val_ids = train_ids
    val_rows = [graph.user_index(u) for u in val_ids]
    val_gold = [labels[u] for u in val_ids]
    weights = class_weights_for(gold) if config.class_weighted else None

    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    log: list[EpochLog] = []
    best_state: dict[str, Any] = copy.deepcopy(model.state_dict())
    best_f, best_epoch, stale = -1.0, -1, 0

    for epoch in range(config.epochs):
        model.train()
        optimizer.zero_grad()
        logits, _ = model(inputs)
        value = loss(logits[train_rows], gold, weights)
        if not torch.isfinite(value):
            raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
        value.backward()
        optimizer.step()

        model.eval()
        with torch.no_grad():
            val_logits, _ = model(inputs)
        val_f = compute_metrics(val_gold, predict_labels(val_logits[val_rows])).f_avg
        log.append(EpochLog(epoch=epoch, train_loss=float(value.item()), val_f_avg=val_f))
        logger.debug(f"epoch {epoch}: loss={value.item():.6f} val_f_avg={val_f:.4f}")

        if val_f > best_f:
            best_f, best_epoch, stale = val_f, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            stale += 1
            if stale >= config.patience:
                logger.info(f"Early stop at epoch {epoch}; best epoch {best_epoch}")
                break

    model.load_state_dict(best_state)
    logger.info(f"Trained {len(log)} epochs; best val F_avg {best_f:.4f} at epoch {best_epoch}")
    return TrainResult(model=model, log=log, best_epoch=best_epoch, best_val_f_avg=best_f)


def save_checkpoint(
    path: str | Path,
    model: GsiModel,
    config: GsiConfig,
    ranking: FmiRanking,
) -> None:
    """Write config, ranking, routing and parameters in one torch container."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "config": config.model_dump(mode="json"),
            "ranking": ranking.model_dump(mode="json"),
            "routing": model.routing.model_dump(mode="json"),
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path: str | Path) -> tuple[GsiModel, GsiConfig, FmiRanking]:
    """
    Rebuild a model from a checkpoint.

    Raises:
        ModelError: for an unsupported format version.
    """
    payload = torch.load(Path(path), weights_only=True)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ModelError(f"unsupported checkpoint version {payload.get('format_version')}")
    config = GsiConfig.model_validate(payload["config"])
    ranking = FmiRanking.model_validate(payload["ranking"])
    routing = FeatureRouting.model_validate(payload["routing"])
    model = GsiModel(
        routing,
        hidden_dim=config.hidden_dim,
        activate_last=config.activate_last,
        zero_init_classifier=config.zero_init_classifier,
    )
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, config, ranking
