"""In-target, cross-target, ablation and r-sweep experiment runners."""

import csv
import json
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any, get_args

from pydantic import BaseModel

from ..config import ExperimentSpec, FilterStrategy, PipelineConfig, Variant
from ..datamodel import Corpus
from ..errors import StageError
from ..gsi import FeatureRouting, predict, prepare_inputs, train
from ..ingestion import split_dataset
from ..pipeline import GraphContext, build_context, run_filter, scope_users
from ..relevance import FilterReport
from ..tfi import rank_tfi
from .metrics import MeanMetrics, MetricReport, accuracy_by_tweet_count, compute_metrics, mean_metrics

logger = logging.getLogger(__name__)

VARIANT_TAGS: dict[str, str] = {
    "full": "MRFG",
    "no_llm_fu": "w/o LLM-FU",
    "no_stfi_R": "w/o S-TFI_R",
    "no_stfi_m": "w/o S-TFI_m",
}

ALL_VARIANTS: tuple[str, ...] = get_args(Variant)


class SeedReport(BaseModel):
    seed: int
    metrics: MetricReport
    best_epoch: int
    epochs_run: int
    graph_dims: int
    content_dims: int
    accuracy_by_tweet_count: dict[str, dict[str, float]]


class ExperimentReport(BaseModel):
    """Per-seed reports and their mean for one (variant, r, strategy) cell."""

    tag: str
    variant: Variant
    mode: str
    train_target: str
    eval_target: str
    r: float
    strategy: str
    spec: dict[str, Any]
    per_seed: list[SeedReport]
    mean: MeanMetrics
    mean_percent: dict[str, float]


def _filter_for_variant(
    config: PipelineConfig,
    corpus: Corpus,
    variant: str,
    reports: Mapping[str, FilterReport] | None,
    strategy: FilterStrategy | None,
) -> Mapping[str, FilterReport] | None:
    if variant == "no_llm_fu":
        return None
    if reports is not None:
        return reports
    spec = config.experiment
    users = scope_users(corpus, _targets(spec))
    return run_filter(config, corpus, users, strategy=strategy)


def _targets(spec: ExperimentSpec) -> list[str]:
    return sorted({spec.train_target, spec.resolved_eval_target})


def run_seeds(
    config: PipelineConfig,
    corpus: Corpus,
    context: GraphContext,
    r: float,
    variant: Variant,
    strategy: str,
) -> ExperimentReport:
    """
    Train and evaluate one variant for every configured seed on a built graph.

    Raises:
        StageError: if the evaluation target has no labeled users.
    """
    spec = config.experiment
    graph, X = context.graph, context.features.values
    train_users = corpus.labeled_users(spec.train_target)
    if spec.mode == "cross_target":
        eval_users = [u.id for u in corpus.labeled_users(spec.resolved_eval_target)]
        if not eval_users:
            raise StageError(f"no labeled users for target {spec.resolved_eval_target}", stage="eval")
    else:
        eval_users = []

    per_seed: list[SeedReport] = []
    for seed in spec.seeds:
        split = split_dataset(train_users, spec.train_target, seed)
        ranking = rank_tfi(
            graph,
            X,
            [graph.user_index(u) for u in split.train],
            [context.labels[u] for u in split.train],
            bins=config.tfi.bins,
            computed_on=f"{spec.train_target}/seed-{seed}/train",
        )
        routing = FeatureRouting.from_ranking(ranking, r, variant)
        gsi_config = config.gsi.model_copy(update={"seed": seed, "r": r})
        result = train(gsi_config, graph, X, routing, context.labels, split.train, split.val)

        targets = eval_users or split.test
        predicted = predict(result.model, graph, prepare_inputs(graph, X, routing), targets)
        gold = [context.labels[u] for u in targets]
        guesses = [predicted[u] for u in targets]
        metrics = compute_metrics(gold, guesses)
        per_seed.append(
            SeedReport(
                seed=seed,
                metrics=metrics,
                best_epoch=result.best_epoch,
                epochs_run=len(result.log),
                graph_dims=len(routing.graph_dims),
                content_dims=len(routing.content_dims),
                accuracy_by_tweet_count=accuracy_by_tweet_count(
                    gold, guesses, [len(corpus.user(u).tweet_ids) for u in targets]
                ),
            )
        )
        logger.info(
            f"[{VARIANT_TAGS[variant]}] seed {seed} r={r}: F_avg={metrics.f_avg:.4f} acc={metrics.accuracy:.4f}"
        )

    mean = mean_metrics([s.metrics for s in per_seed])
    return ExperimentReport(
        tag=VARIANT_TAGS[variant],
        variant=variant,
        mode=spec.mode,
        train_target=spec.train_target,
        eval_target=spec.resolved_eval_target,
        r=r,
        strategy=strategy,
        spec=spec.model_dump(mode="json"),
        per_seed=per_seed,
        mean=mean,
        mean_percent=mean.as_percent(),
    )


def run_experiment(
    config: PipelineConfig,
    corpus: Corpus,
    reports: Mapping[str, FilterReport] | None = None,
    variant: Variant | None = None,
    r: float | None = None,
) -> ExperimentReport:
    """
    Run the pipeline once per seed for one variant and average the metrics.

    ``reports`` reuses relevance filter output; otherwise the filter runs
    with the configured strategy. ``no_llm_fu`` keeps every followee tweet.
    """
    spec = config.experiment
    variant = variant or spec.variant
    r = r if r is not None else config.gsi.r
    strategy = "off" if variant == "no_llm_fu" else config.filter.strategy

    filtered = _filter_for_variant(config, corpus, variant, reports, config.filter.strategy)
    context = build_context(config, corpus, scope_users(corpus, _targets(spec)), filtered)
    return run_seeds(config, corpus, context, r, variant, strategy)


def run_ablation(
    config: PipelineConfig,
    corpus: Corpus,
    variants: Sequence[Variant] | None = None,
    reports: Mapping[str, FilterReport] | None = None,
) -> list[ExperimentReport]:
    """Run the full model and each ablation, filtering once and building each graph once."""
    variants = list(variants or ALL_VARIANTS)
    spec = config.experiment
    users = scope_users(corpus, _targets(spec))
    r = config.gsi.r

    filtered_context: GraphContext | None = None
    unfiltered_context: GraphContext | None = None
    results: list[ExperimentReport] = []
    for variant in variants:
        if variant == "no_llm_fu":
            if unfiltered_context is None:
                unfiltered_context = build_context(config, corpus, users, None)
            results.append(run_seeds(config, corpus, unfiltered_context, r, variant, "off"))
        else:
            if filtered_context is None:
                filtered = _filter_for_variant(config, corpus, variant, reports, config.filter.strategy)
                filtered_context = build_context(config, corpus, users, filtered)
            results.append(run_seeds(config, corpus, filtered_context, r, variant, config.filter.strategy))
    return results


def run_sweep(config: PipelineConfig, corpus: Corpus) -> list[ExperimentReport]:
    """Full-model reports over every (strategy, r) pair of the experiment spec."""
    spec = config.experiment
    strategies = spec.strategies or [config.filter.strategy]
    users = scope_users(corpus, _targets(spec))

    results: list[ExperimentReport] = []
    for strategy in strategies:
        filtered = run_filter(config, corpus, users, strategy=strategy)
        context = build_context(config, corpus, users, filtered)
        for r in spec.r_values:
            results.append(run_seeds(config, corpus, context, r, "full", strategy))
    return results


def write_reports(reports: Sequence[ExperimentReport], path: str | Path) -> None:
    """Write reports as an indented JSON array, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = [r.model_dump(mode="json") for r in reports]
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_sweep_csv(reports: Sequence[ExperimentReport], path: str | Path) -> None:
    """CSV with columns r, strategy, f_avg (seed-mean F_avg in percent)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["r", "strategy", "f_avg"])
        for report in reports:
            writer.writerow([report.r, report.strategy, report.mean_percent["f_avg"]])
