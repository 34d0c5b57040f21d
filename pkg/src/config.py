"""Configuration loader for pipeline runs."""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .datamodel import normalize_target
from .errors import ConfigError

FilterStrategy = Literal["llm", "cosine", "mock", "off"]
Variant = Literal["full", "no_llm_fu", "no_stfi_R", "no_stfi_m"]
ExperimentMode = Literal["in_target", "cross_target", "ablation", "sweep"]

DEFAULT_DIMS = {"hashing": 256, "external": 768}


class RuntimeSettings(BaseSettings):
    """Process-level settings read from MRFG_* environment variables."""

    model_config = SettingsConfigDict(env_prefix="MRFG_")

    config: Path | None = None
    log_level: str = "INFO"


class EmbedderSpec(BaseModel):
    """Which embedder produces node features."""

    kind: Literal["hashing", "external"] = "hashing"
    dim: int | None = Field(default=None, ge=8)
    seed: int = 0
    path: Path | None = None

    @model_validator(mode="after")
    def _check_kind(self) -> "EmbedderSpec":
        if self.dim is None:
            self.dim = DEFAULT_DIMS[self.kind]
        if self.kind == "external" and self.path is None:
            raise ValueError("external embedder requires a path")
        return self

    @property
    def width(self) -> int:
        assert self.dim is not None
        return self.dim


class LlmEndpointConfig(BaseModel):
    """OpenAI-compatible chat-completions endpoint used for relevance scoring."""

    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    max_retries: int = Field(default=3, ge=0)
    timeout: float = Field(default=30.0, gt=0)
    max_tweets_per_prompt: int = Field(default=25, ge=1)
    temperature: float = Field(default=0.0, ge=0)
    backoff_seconds: float = Field(default=1.0, ge=0)
    concurrency: int = Field(default=5, ge=1)


class FilterConfig(BaseModel):
    """Relevance filter strategy for followee tweets."""

    strategy: FilterStrategy = "mock"
    endpoint: LlmEndpointConfig | None = None

    @model_validator(mode="after")
    def _llm_needs_endpoint(self) -> "FilterConfig":
        if self.strategy == "llm" and self.endpoint is None:
            raise ValueError("filter strategy 'llm' requires an endpoint section")
        return self

    @property
    def effective_endpoint(self) -> LlmEndpointConfig:
        """Endpoint settings; defaults apply when only prompting/chunking is needed."""
        return self.endpoint or LlmEndpointConfig()


class TfiConfig(BaseModel):
    bins: int = Field(default=16, ge=2)


class GsiConfig(BaseModel):
    """Hyperparameters of the dual-path graph/MLP model."""

    r: float = Field(default=0.3, gt=0, lt=1)
    hidden_dim: int = Field(default=64, ge=2)
    layers: Literal[2] = 2
    activation: Literal["relu"] = "relu"
    learning_rate: float = Field(default=1e-3, gt=0)
    epochs: int = Field(default=200, ge=1)
    patience: int = Field(default=20, ge=1)
    seed: int = 0
    activate_last: bool = False
    class_weighted: bool = False
    zero_init_classifier: bool = True


class ExperimentSpec(BaseModel):
    """What an experiment run evaluates."""

    mode: ExperimentMode = "in_target"
    variant: Variant = "full"
    train_target: str = "biden"
    eval_target: str | None = None
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    r_values: list[float] = Field(default_factory=lambda: [0.3], min_length=1)
    strategies: list[FilterStrategy] | None = None

    @model_validator(mode="after")
    def _check_targets(self) -> "ExperimentSpec":
        self.train_target = normalize_target(self.train_target)
        if self.eval_target is not None:
            self.eval_target = normalize_target(self.eval_target)
        if self.mode == "cross_target":
            if self.eval_target is None or self.eval_target == self.train_target:
                raise ValueError("cross_target requires an eval_target different from train_target")
        if any(not 0 < r < 1 for r in self.r_values):
            raise ValueError("r values must lie in (0, 1)")
        return self

    @property
    def resolved_eval_target(self) -> str:
        return self.eval_target or self.train_target


class SynthSpec(BaseModel):
    """Parameters of the synthetic corpus generator."""

    n_users: int = Field(default=1000, ge=3)
    tweets_per_user: tuple[int, int] = (1, 4)
    followees_per_user: tuple[int, int] = (2, 6)
    follow_probability: float = Field(default=0.8, ge=0, le=1)
    homophily: float = Field(default=0.9, ge=0, le=1)
    label_distribution: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    dim: int = Field(default=128, ge=8)
    graph_fraction: float = Field(default=0.3, ge=0, le=1)
    noise: float = Field(default=0.5, ge=0)
    relevance_noise: float = Field(default=0.3, ge=0, le=1)
    topic_strength: float = Field(default=3.0, ge=0)
    target: str = "biden"
    seed: int = 0

    @model_validator(mode="after")
    def _check_ranges(self) -> "SynthSpec":
        if abs(sum(self.label_distribution) - 1.0) > 1e-9 or min(self.label_distribution) < 0:
            raise ValueError("label_distribution must be non-negative and sum to 1")
        for name in ("tweets_per_user", "followees_per_user"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must be a range lo <= hi with lo >= 0")
        self.target = normalize_target(self.target)
        return self


class PathsConfig(BaseModel):
    """Where inputs are read and artifacts written."""

    corpus_dir: Path = Path("data")
    cache: Path | None = None
    mock_table: Path | None = None
    out_dir: Path = Path("out")

    @property
    def users(self) -> Path:
        return self.corpus_dir / "users.jsonl"

    @property
    def tweets(self) -> Path:
        return self.corpus_dir / "tweets.jsonl"

    @property
    def edges(self) -> Path:
        return self.corpus_dir / "edges.jsonl"


class PipelineConfig(BaseModel):
    """Root configuration of a pipeline run."""

    paths: PathsConfig = Field(default_factory=PathsConfig)
    embedder: EmbedderSpec = Field(default_factory=EmbedderSpec)
    filter: FilterConfig = Field(default_factory=FilterConfig)
    tfi: TfiConfig = Field(default_factory=TfiConfig)
    gsi: GsiConfig = Field(default_factory=GsiConfig)
    experiment: ExperimentSpec = Field(default_factory=ExperimentSpec)
    synth: SynthSpec = Field(default_factory=SynthSpec)


def resolve_api_key(endpoint: LlmEndpointConfig) -> str:
    """
    Read the API key from the environment variable named in the endpoint.

    A leading '$' in the name is accepted: "$OPENAI_API_KEY" and
    "OPENAI_API_KEY" refer to the same variable.
    """
    return os.environ.get(endpoint.api_key_env.lstrip("$"), "")


def _parse_text(content: str, source: Path) -> dict[str, Any]:
    try:
        return json.loads(content)
    except json.JSONDecodeError:
        pass
    try:
        return yaml.safe_load(content) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {source} as JSON or YAML: {e}", path=str(source)) from e


def _anchor(path: Path | None, base: Path) -> Path | None:
    if path is None or path.is_absolute():
        return path
    return base / path


def load_config(path: str | Path) -> PipelineConfig:
    """
    Load a pipeline configuration from a JSON or YAML file.

    Relative paths inside the file are resolved against the file's directory.

    Raises:
        FileNotFoundError: If the config file doesn't exist.
        ConfigError: If the file is neither JSON nor YAML.
        pydantic.ValidationError: If the config doesn't match the schema.
    """
    path = Path(path)
    config = PipelineConfig.model_validate(_parse_text(path.read_text(encoding="utf-8"), path))

    base = path.parent
    paths = config.paths
    paths.corpus_dir = _anchor(paths.corpus_dir, base) or paths.corpus_dir
    paths.out_dir = _anchor(paths.out_dir, base) or paths.out_dir
    paths.cache = _anchor(paths.cache, base)
    paths.mock_table = _anchor(paths.mock_table, base)
    config.embedder.path = _anchor(config.embedder.path, base)
    return config


def apply_overrides(config: PipelineConfig, **overrides: Any) -> PipelineConfig:
    """
    Return a validated copy of the config with CLI flag overrides applied.

    Recognized keys: seed, target, r, variant, strategy, out. None values are ignored.
    """
    data = config.model_dump()
    if overrides.get("seed") is not None:
        data["gsi"]["seed"] = overrides["seed"]
        data["experiment"]["seeds"] = [overrides["seed"]]
        data["synth"]["seed"] = overrides["seed"]
    if overrides.get("target") is not None:
        data["experiment"]["train_target"] = overrides["target"]
    if overrides.get("r") is not None:
        data["gsi"]["r"] = overrides["r"]
        data["experiment"]["r_values"] = [overrides["r"]]
    if overrides.get("variant") is not None:
        data["experiment"]["variant"] = overrides["variant"]
    if overrides.get("strategy") is not None:
        data["filter"]["strategy"] = overrides["strategy"]
    if overrides.get("out") is not None:
        data["paths"]["out_dir"] = Path(overrides["out"])
    return PipelineConfig.model_validate(data)


def config_hash(config: PipelineConfig) -> str:
    """SHA-256 of the canonical JSON form of the config."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
