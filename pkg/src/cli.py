"""Command-line entry point: one subcommand per pipeline stage."""

import argparse
import json
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, get_args

from pydantic import ValidationError

from .artifacts import write_manifest
from .config import FilterStrategy, PipelineConfig, RuntimeSettings, Variant, apply_overrides, load_config
from .datamodel import Corpus
from .errors import ConfigError, MrfgError, StageError
from .evaluation.experiment import run_ablation, run_experiment, run_sweep, write_reports, write_sweep_csv
from .gsi import FeatureRouting, save_checkpoint, train
from .ingestion import DatasetSplit, corpus_stats, load_split, save_split, split_dataset
from .pipeline import (
    GraphContext,
    build_context,
    load_filter_reports,
    load_inputs,
    run_filter,
    save_filter_reports,
    scope_users,
)
from .relevance import FilterReport
from .synth import generate, write_synth
from .tfi import load_ranking, rank_tfi, save_ranking

logger = logging.getLogger(__name__)

COMMANDS = ("synth", "ingest", "filter", "rank", "train", "eval", "ablate", "sweep")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrfg", description="User-level stance detection pipeline")
    parser.add_argument("command", choices=COMMANDS, help="Pipeline stage to run")
    parser.add_argument("--config", type=Path, help="JSON or YAML pipeline config (default: $MRFG_CONFIG)")
    parser.add_argument("--seed", type=int, help="Seed for splits, model init and generation")
    parser.add_argument("--target", help="Training stance target")
    parser.add_argument("--r", type=float, help="Share of ranked dims routed to the graph path")
    parser.add_argument("--variant", choices=get_args(Variant), help="Model variant")
    parser.add_argument("--strategy", choices=get_args(FilterStrategy), help="Relevance filter strategy")
    parser.add_argument("--out", type=Path, help="Output directory")
    parser.add_argument("--log-level", help="Logging level (default: $MRFG_LOG_LEVEL or INFO)")
    return parser


def _corpus_files(config: PipelineConfig) -> list[Path]:
    paths = config.paths
    files = [paths.users, paths.tweets, paths.edges]
    if config.embedder.kind == "external" and config.embedder.path is not None:
        files.append(config.embedder.path)
    return files


def _rft_path(config: PipelineConfig) -> Path:
    return config.paths.out_dir / "rft.jsonl"


def _split_path(config: PipelineConfig, seed: int) -> Path:
    return config.paths.out_dir / f"split-{config.experiment.train_target}-seed{seed}.jsonl"


def _variant_suffix(config: PipelineConfig) -> str:
    variant = config.experiment.variant
    return "" if variant == "full" else f"-{variant}"


def _ranking_path(config: PipelineConfig, seed: int) -> Path:
    # no_llm_fu ranks on the unfiltered graph; the other variants share the filtered ranking
    suffix = "-no_llm_fu" if config.experiment.variant == "no_llm_fu" else ""
    return config.paths.out_dir / f"ranking-{config.experiment.train_target}-seed{seed}{suffix}.json"


def _stored_reports(config: PipelineConfig) -> dict[str, FilterReport] | None:
    """Saved relevance output for filtering strategies; None when the filter is off."""
    if config.filter.strategy == "off":
        return None
    path = _rft_path(config)
    if not path.exists():
        raise StageError(f"run the filter command first; {path} is missing", stage="filter")
    return load_filter_reports(path)


def _maybe_stored_reports(config: PipelineConfig) -> dict[str, FilterReport] | None:
    if config.filter.strategy != "off" and _rft_path(config).exists():
        logger.info(f"Reusing relevance output {_rft_path(config)}")
        return load_filter_reports(_rft_path(config))
    return None


def cmd_synth(config: PipelineConfig, args: argparse.Namespace) -> dict[str, Any]:
    directory = args.out or config.paths.corpus_dir
    result = generate(config.synth)
    paths = write_synth(result, directory)
    for path in paths.values():
        write_manifest(path, "synth", config, [], seed=config.synth.seed)
    return {"users": len(result.users), "tweets": len(result.tweets), "files": {k: str(v) for k, v in paths.items()}}


def cmd_ingest(config: PipelineConfig, args: argparse.Namespace) -> dict[str, Any]:
    corpus = load_inputs(config)
    out = config.paths.out_dir
    out.mkdir(parents=True, exist_ok=True)
    stats = corpus_stats(corpus.users, corpus.tweets)
    stats_path = out / "stats.json"
    stats_path.write_text(json.dumps(stats.model_dump(), indent=2) + "\n", encoding="utf-8")
    write_manifest(stats_path, "ingest", config, _corpus_files(config))

    target = config.experiment.train_target
    splits = {}
    for seed in config.experiment.seeds:
        split = split_dataset(corpus.labeled_users(target), target, seed)
        path = _split_path(config, seed)
        save_split(split, path)
        write_manifest(path, "ingest", config, _corpus_files(config), seed=seed)
        splits[seed] = {"train": len(split.train), "val": len(split.val), "test": len(split.test)}
    return {"stats": str(stats_path), "users": stats.total_users, "tweets": stats.total_tweets, "splits": splits}


def cmd_filter(config: PipelineConfig, args: argparse.Namespace) -> dict[str, Any]:
    corpus = load_inputs(config)
    spec = config.experiment
    users = scope_users(corpus, sorted({spec.train_target, spec.resolved_eval_target}))
    reports = run_filter(config, corpus, users)
    if reports is None:
        return {"strategy": "off", "retained": "all"}
    path = _rft_path(config)
    save_filter_reports(reports, path)
    inputs = _corpus_files(config) + [p for p in (config.paths.mock_table,) if p is not None]
    write_manifest(path, "filter", config, inputs)
    scored = sum(len(r.scores) for r in reports.values())
    retained = sum(len(r.retained) for r in reports.values())
    return {"strategy": config.filter.strategy, "rft": str(path), "scored": scored, "retained": retained}


def _train_context(config: PipelineConfig) -> tuple[Corpus, GraphContext]:
    corpus = load_inputs(config)
    spec = config.experiment
    users = scope_users(corpus, sorted({spec.train_target, spec.resolved_eval_target}))
    reports = None if spec.variant == "no_llm_fu" else _stored_reports(config)
    return corpus, build_context(config, corpus, users, reports)


def _load_or_split(config: PipelineConfig, context: GraphContext, corpus: Corpus, seed: int) -> DatasetSplit:
    path = _split_path(config, seed)
    target = config.experiment.train_target
    if not path.exists():
        return split_dataset(corpus.labeled_users(target), target, seed)
    split = load_split(path)
    unknown = sorted(set(split.train + split.val + split.test) - set(context.labels))
    if unknown:
        raise StageError(
            f"split {path} names {len(unknown)} users without a label in the corpus (first: {unknown[0]}); rerun ingest",
            stage="ingest",
        )
    return split


def cmd_rank(config: PipelineConfig, args: argparse.Namespace) -> dict[str, Any]:
    corpus, context = _train_context(config)
    seed = config.gsi.seed
    split = _load_or_split(config, context, corpus, seed)
    ranking = rank_tfi(
        context.graph,
        context.features.values,
        [context.graph.user_index(u) for u in split.train],
        [context.labels[u] for u in split.train],
        bins=config.tfi.bins,
        computed_on=f"{split.target}/seed-{seed}/train",
    )
    ranking = ranking.model_copy(update={"target": split.target, "seed": seed})
    path = _ranking_path(config, seed)
    save_ranking(ranking, path)
    inputs = _corpus_files(config) + [_rft_path(config), _split_path(config, seed)]
    write_manifest(path, "rank", config, inputs, seed=seed)
    graph = context.graph
    return {
        "ranking": str(path),
        "top": ranking.order[:10],
        "graph": {"users": graph.num_users, "tweet_nodes": len(graph.tweet_nodes), "edges": len(graph.edges)},
    }


def cmd_train(config: PipelineConfig, args: argparse.Namespace) -> dict[str, Any]:
    corpus, context = _train_context(config)
    seed = config.gsi.seed
    ranking_path = _ranking_path(config, seed)
    if not ranking_path.exists():
        raise StageError(f"run the rank command first; {ranking_path} is missing", stage="rank")
    ranking = load_ranking(ranking_path)
    split = _load_or_split(config, context, corpus, seed)
    routing = FeatureRouting.from_ranking(ranking, config.gsi.r, config.experiment.variant)
    result = train(config.gsi, context.graph, context.features.values, routing, context.labels, split.train, split.val)

    out = config.paths.out_dir
    stem = f"model-{split.target}-seed{seed}{_variant_suffix(config)}"
    checkpoint = out / f"{stem}.pt"
    save_checkpoint(checkpoint, result.model, config.gsi, ranking)
    log_path = out / f"{stem}.log.jsonl"
    log_path.write_text("".join(e.model_dump_json() + "\n" for e in result.log), encoding="utf-8")
    inputs = _corpus_files(config) + [_rft_path(config), _split_path(config, seed), ranking_path]
    for path in (checkpoint, log_path):
        write_manifest(path, "train", config, inputs, seed=seed)
    return {
        "checkpoint": str(checkpoint),
        "epochs": len(result.log),
        "best_epoch": result.best_epoch,
        "best_val_f_avg": result.best_val_f_avg,
    }


def _summaries(reports: Sequence[Any]) -> list[dict[str, Any]]:
    return [{"tag": r.tag, "r": r.r, "strategy": r.strategy, **r.mean_percent} for r in reports]


def cmd_eval(config: PipelineConfig, args: argparse.Namespace) -> dict[str, Any]:
    corpus = load_inputs(config)
    report = run_experiment(config, corpus, reports=_maybe_stored_reports(config))
    path = config.paths.out_dir / f"report-{config.experiment.mode}-{config.experiment.variant}.json"
    write_reports([report], path)
    write_manifest(path, "eval", config, _corpus_files(config) + [_rft_path(config)])
    return {"report": str(path), "results": _summaries([report])}


def cmd_ablate(config: PipelineConfig, args: argparse.Namespace) -> dict[str, Any]:
    corpus = load_inputs(config)
    variants = [args.variant] if args.variant else None
    reports = run_ablation(config, corpus, variants=variants, reports=_maybe_stored_reports(config))
    path = config.paths.out_dir / "ablation.json"
    write_reports(reports, path)
    write_manifest(path, "ablate", config, _corpus_files(config) + [_rft_path(config)])
    return {"report": str(path), "results": _summaries(reports)}


def cmd_sweep(config: PipelineConfig, args: argparse.Namespace) -> dict[str, Any]:
    corpus = load_inputs(config)
    reports = run_sweep(config, corpus)
    out = config.paths.out_dir
    json_path, csv_path = out / "sweep.json", out / "sweep.csv"
    write_reports(reports, json_path)
    write_sweep_csv(reports, csv_path)
    inputs = _corpus_files(config) + [p for p in (config.paths.mock_table,) if p is not None]
    for path in (json_path, csv_path):
        write_manifest(path, "sweep", config, inputs)
    return {"report": str(json_path), "csv": str(csv_path), "results": _summaries(reports)}


HANDLERS: dict[str, Callable[[PipelineConfig, argparse.Namespace], dict[str, Any]]] = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "filter": cmd_filter,
    "rank": cmd_rank,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
}


def _load(args: argparse.Namespace, settings: RuntimeSettings) -> PipelineConfig:
    path = args.config or settings.config
    config = load_config(path) if path is not None else PipelineConfig()
    return apply_overrides(
        config,
        seed=args.seed,
        target=args.target,
        r=args.r,
        variant=args.variant,
        strategy=args.strategy,
        out=args.out if args.command != "synth" else None,
    )


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command; the last stdout line is a JSON summary or error."""
    args = build_parser().parse_args(argv)
    settings = RuntimeSettings()
    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )

    try:
        config = _load(args, settings)
        summary = HANDLERS[args.command](config, args)
    except ValidationError as e:
        print(json.dumps({"error": "ValidationError", "message": str(e).splitlines()[0], "details": e.errors(include_url=False)}, default=str))
        return 2
    except FileNotFoundError as e:
        print(json.dumps({"error": "FileNotFoundError", "message": str(e)}))
        return 2
    except ConfigError as e:
        print(json.dumps(e.to_dict(), default=str))
        return 2
    except MrfgError as e:
        logger.error(e.message)
        print(json.dumps(e.to_dict(), default=str))
        return 1
    except Exception as e:
        logger.exception(f"{args.command} failed")
        print(json.dumps({"error": type(e).__name__, "message": str(e)}, default=str))
        return 1

    print(json.dumps({"command": args.command, **summary}, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
