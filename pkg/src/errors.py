"""Exception hierarchy shared by every pipeline stage."""

from typing import Any


class MrfgError(Exception):
    """Base class for all pipeline errors."""

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = {k: v for k, v in context.items() if v is not None}

    def to_dict(self) -> dict[str, Any]:
        """Machine-readable form printed by the CLI on failure."""
        return {"error": type(self).__name__, "message": self.message, **self.context}


class CorpusError(MrfgError):
    """Malformed, duplicate or dangling record while loading a corpus."""

    def __init__(self, message: str, line: int | None = None, ref_id: str | None = None):
        super().__init__(message, line=line, ref_id=ref_id)
        self.line = line
        self.ref_id = ref_id


class ConfigError(MrfgError):
    """Config file cannot be parsed."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message, path=path)
        self.path = path


class GraphError(MrfgError):
    """Invalid input to the social graph builder."""

    def __init__(self, message: str, ref_id: str | None = None):
        super().__init__(message, ref_id=ref_id)
        self.ref_id = ref_id


class SplitError(MrfgError):
    """Dataset cannot be split as requested."""


class EmbeddingError(MrfgError):
    """Embedding lookup or shape failure."""

    def __init__(self, message: str, ref_id: str | None = None):
        super().__init__(message, ref_id=ref_id)
        self.ref_id = ref_id


class RelevanceError(MrfgError):
    """LLM response could not be interpreted."""


class LlmRequestError(MrfgError):
    """Chat-completions request failed after all retries."""

    def __init__(self, message: str, status_code: int = 0, body: str | None = None):
        super().__init__(message, status_code=status_code, body=body)
        self.status_code = status_code
        self.body = body


class RankingError(MrfgError):
    """Feature ranking cannot be computed."""


class ModelError(MrfgError):
    """Invalid model input or routing."""


class TrainingError(MrfgError):
    """Training diverged."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message, epoch=epoch)
        self.epoch = epoch


class MetricError(MrfgError):
    """Invalid metric input."""


class SynthError(MrfgError):
    """Synthetic generator spec is infeasible."""


class StageError(MrfgError):
    """A pipeline stage is missing an upstream artifact."""

    def __init__(self, message: str, stage: str):
        super().__init__(message, stage=stage)
        self.stage = stage
