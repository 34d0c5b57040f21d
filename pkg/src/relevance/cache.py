"""Append-only store of relevance verdicts, keyed by (user, tweet, model)."""

import asyncio
import json
import logging
from pathlib import Path

from pydantic import BaseModel

from .base import RelevanceScore

logger = logging.getLogger(__name__)


class Verdict(BaseModel):
    user_id: str
    tweet_id: str
    model: str
    score: RelevanceScore


class VerdictCache:
    """
    Relevance verdicts persisted as one JSON line each.

    Without a path the cache lives in memory only. A later verdict for the
    same key wins when the file is reloaded.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[tuple[str, str, str], RelevanceScore] = {}
        self._lock = asyncio.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        assert self.path is not None
        with open(self.path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                try:
                    v = Verdict.model_validate_json(line)
                except ValueError:
                    logger.warning(f"Skipping malformed cache line in {self.path}")
                    continue
                self._entries[(v.user_id, v.tweet_id, v.model)] = v.score
        logger.info(f"Loaded {len(self._entries)} cached verdicts from {self.path}")

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, user_id: str, tweet_id: str, model: str) -> RelevanceScore | None:
        return self._entries.get((user_id, tweet_id, model))

    async def put_many(self, user_id: str, model: str, scores: dict[str, RelevanceScore]) -> None:
        """Record verdicts for one user and append them to the file."""
        async with self._lock:
            lines = []
            for tweet_id, score in scores.items():
                self._entries[(user_id, tweet_id, model)] = score
                lines.append(Verdict(user_id=user_id, tweet_id=tweet_id, model=model, score=score).model_dump_json())
            if self.path is not None and lines:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8", newline="\n") as f:
                    f.write("\n".join(lines) + "\n")

    def compact(self) -> None:
        """Rewrite the file with one line per key, sorted."""
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", encoding="utf-8", newline="\n") as f:
            for (user_id, tweet_id, model), score in sorted(self._entries.items()):
                f.write(json.dumps({"user_id": user_id, "tweet_id": tweet_id, "model": model, "score": int(score)}) + "\n")
