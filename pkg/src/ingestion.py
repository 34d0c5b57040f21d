"""Line-delimited corpus loading, validation, statistics and stratified splits."""

import json
import logging
import random
from collections import Counter, defaultdict
from collections.abc import Iterator, Sequence
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field, ValidationError, model_validator

from .datamodel import LABEL_ORDER, Role, StanceLabel, Tweet, User, normalize_target
from .errors import CorpusError, SplitError
from .evaluation.metrics import percent_half_up

logger = logging.getLogger(__name__)

TRAIN_PERCENT = 70
VAL_PERCENT = 15


class UserRecord(BaseModel):
    """One line of the users file."""

    id: str
    description: str = ""
    target: str
    label: str | None = None
    followee_ids: list[str] = []


class TweetRecord(BaseModel):
    """One line of the tweets file."""

    id: str
    author_id: str
    text: str
    degenerate: bool = False


class EdgeRecord(BaseModel):
    """One line of the edges file: src follows dst."""

    src_user_id: str
    dst_user_id: str


class DatasetSplit(BaseModel):
    """Disjoint train/val/test user ids for one target."""

    target: str
    seed: int
    train: list[str]
    val: list[str]
    test: list[str]

    @model_validator(mode="after")
    def _disjoint(self) -> "DatasetSplit":
        train, val, test = set(self.train), set(self.val), set(self.test)
        if train & val or train & test or val & test:
            raise ValueError("train/val/test must be disjoint")
        return self


class TargetStats(BaseModel):
    users: int = 0
    tweets: int = 0
    unlabeled: int = 0
    labels: dict[str, int] = Field(default_factory=dict)
    label_percent: dict[str, float] = Field(default_factory=dict)


class CorpusStats(BaseModel):
    """Per-target counts plus role distributions."""

    targets: dict[str, TargetStats]
    total_users: int
    total_tweets: int
    role_percent: dict[str, float]
    role_tweet_percent: dict[str, float]


def _iter_records(path: Path) -> Iterator[tuple[int, dict[str, Any]]]:
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"malformed line {line_no} in {path.name}: {e.msg}", line=line_no)
            if not isinstance(data, dict):
                raise CorpusError(f"malformed line {line_no} in {path.name}: not an object", line=line_no)
            yield line_no, data


def _parse(model: type[BaseModel], data: dict[str, Any], path: Path, line_no: int) -> Any:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise CorpusError(f"malformed line {line_no} in {path.name}: {e.errors()[0]['msg']}", line=line_no)


def _parse_label(value: str | None, line_no: int) -> StanceLabel | None:
    if value is None:
        return None
    try:
        return StanceLabel(value)
    except ValueError:
        raise CorpusError(f"invalid label at line {line_no}", line=line_no)


def load_corpus(
    users_path: str | Path,
    tweets_path: str | Path,
    edges_path: str | Path,
) -> tuple[list[User], list[Tweet]]:
    """
    Load and cross-validate a corpus.

    Roles are derived from the follow structure: a user with an incoming
    follow is a followee, otherwise a user with an outgoing follow is a
    follower, otherwise isolated. Follow relations are the union of the
    users file's followee_ids and the edges file.

    Raises:
        CorpusError: on malformed lines, invalid labels, duplicate ids or dangling references.
    """
    users_path, tweets_path, edges_path = Path(users_path), Path(tweets_path), Path(edges_path)

    records: dict[str, tuple[int, UserRecord, StanceLabel | None]] = {}
    for line_no, data in _iter_records(users_path):
        record: UserRecord = _parse(UserRecord, data, users_path, line_no)
        if record.id in records:
            raise CorpusError(f"duplicate user id {record.id} at line {line_no}", line=line_no, ref_id=record.id)
        label = _parse_label(record.label, line_no)
        try:
            normalize_target(record.target)
        except ValueError:
            raise CorpusError(f"empty target at line {line_no}", line=line_no)
        records[record.id] = (line_no, record, label)
    if not records:
        raise CorpusError("no users")

    tweets: list[Tweet] = []
    tweet_ids_by_author: dict[str, list[str]] = defaultdict(list)
    seen_tweets: set[str] = set()
    for line_no, data in _iter_records(tweets_path):
        record_t: TweetRecord = _parse(TweetRecord, data, tweets_path, line_no)
        if record_t.id in seen_tweets:
            raise CorpusError(f"duplicate tweet id {record_t.id} at line {line_no}", line=line_no, ref_id=record_t.id)
        if record_t.author_id not in records:
            raise CorpusError(
                f"tweet {record_t.id} at line {line_no} references unknown user {record_t.author_id}",
                line=line_no,
                ref_id=record_t.author_id,
            )
        try:
            tweet = Tweet(**record_t.model_dump())
        except ValidationError:
            raise CorpusError(f"empty text for tweet {record_t.id} at line {line_no}", line=line_no, ref_id=record_t.id)
        seen_tweets.add(tweet.id)
        tweets.append(tweet)
        tweet_ids_by_author[tweet.author_id].append(tweet.id)

    follows: dict[str, list[str]] = {uid: [] for uid in records}
    for uid, (line_no, record, _) in records.items():
        for followee_id in record.followee_ids:
            _add_follow(follows, records, uid, followee_id, line_no)
    for line_no, data in _iter_records(edges_path):
        edge: EdgeRecord = _parse(EdgeRecord, data, edges_path, line_no)
        if edge.src_user_id not in records:
            raise CorpusError(f"edge at line {line_no} references unknown user {edge.src_user_id}", line=line_no, ref_id=edge.src_user_id)
        _add_follow(follows, records, edge.src_user_id, edge.dst_user_id, line_no)

    has_incoming = {dst for dsts in follows.values() for dst in dsts}
    users: list[User] = []
    for uid, (_, record, label) in records.items():
        if uid in has_incoming:
            role = Role.FOLLOWEE
        elif follows[uid]:
            role = Role.FOLLOWER
        else:
            role = Role.ISOLATED
        users.append(
            User(
                id=uid,
                description=record.description,
                tweet_ids=tuple(tweet_ids_by_author.get(uid, [])),
                followee_ids=tuple(follows[uid]),
                role=role,
                label=label,
                target=record.target,
            )
        )

    logger.info(f"Loaded {len(users)} users and {len(tweets)} tweets from {users_path.parent}")
    return users, tweets


def _add_follow(
    follows: dict[str, list[str]],
    records: dict[str, Any],
    src: str,
    dst: str,
    line_no: int,
) -> None:
    if dst not in records:
        raise CorpusError(f"follow at line {line_no} references unknown user {dst}", line=line_no, ref_id=dst)
    if dst == src:
        raise CorpusError(f"user {src} follows itself at line {line_no}", line=line_no, ref_id=src)
    if dst not in follows[src]:
        follows[src].append(dst)


def _write_jsonl(rows: Sequence[dict[str, Any]], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def save_corpus(users: Sequence[User], tweets: Sequence[Tweet], directory: str | Path) -> None:
    """Write users.jsonl, tweets.jsonl and edges.jsonl into a directory."""
    directory = Path(directory)
    _write_jsonl(
        [
            {
                "id": u.id,
                "description": u.description,
                "target": u.target,
                "label": u.label.value if u.label else None,
                "followee_ids": list(u.followee_ids),
            }
            for u in users
        ],
        directory / "users.jsonl",
    )
    tweet_rows: list[dict[str, Any]] = []
    for t in tweets:
        row: dict[str, Any] = {"id": t.id, "author_id": t.author_id, "text": t.text}
        if t.degenerate:
            row["degenerate"] = True
        tweet_rows.append(row)
    _write_jsonl(tweet_rows, directory / "tweets.jsonl")
    _write_jsonl(
        [{"src_user_id": u.id, "dst_user_id": f} for u in users for f in u.followee_ids],
        directory / "edges.jsonl",
    )


def split_dataset(users: Sequence[User], target: str, seed: int) -> DatasetSplit:
    """
    Stratified 70/15/15 split of one target's labeled users.

    Within each label class of size c, train takes floor(0.7c), val takes
    floor(0.15c) and test the remainder, after a seeded shuffle.

    Raises:
        SplitError: if a user of the target is unlabeled or a class has fewer than 3 members.
    """
    target = normalize_target(target)
    by_label: dict[StanceLabel, list[str]] = defaultdict(list)
    for user in users:
        if user.target != target:
            continue
        if user.label is None:
            raise SplitError(f"user {user.id} has no label for target {target}")
        by_label[user.label].append(user.id)
    if not by_label:
        raise SplitError(f"no labeled users for target {target}")

    rng = random.Random(seed)
    train: list[str] = []
    val: list[str] = []
    test: list[str] = []
    for label in LABEL_ORDER:
        members = sorted(by_label.get(label, []))
        if not members:
            continue
        count = len(members)
        if count < 3:
            raise SplitError(f"class {label.value} has {count} members for target {target}; cannot stratify")
        rng.shuffle(members)
        n_train = TRAIN_PERCENT * count // 100
        n_val = VAL_PERCENT * count // 100
        train.extend(members[:n_train])
        val.extend(members[n_train : n_train + n_val])
        test.extend(members[n_train + n_val :])

    split = DatasetSplit(target=target, seed=seed, train=sorted(train), val=sorted(val), test=sorted(test))
    logger.info(f"Split {target} (seed {seed}): {len(split.train)}/{len(split.val)}/{len(split.test)}")
    return split


def save_split(split: DatasetSplit, path: str | Path) -> None:
    """Write the split as a single JSON line."""
    _write_jsonl([split.model_dump()], Path(path))


def load_split(path: str | Path) -> DatasetSplit:
    """
    Read a split written by ``save_split``.

    Raises:
        CorpusError: if the file is malformed or does not hold exactly one record.
    """
    path = Path(path)
    rows = [data for _, data in _iter_records(path)]
    if len(rows) != 1:
        raise CorpusError(f"split file {path.name} must hold exactly one record")
    return DatasetSplit.model_validate(rows[0])


def corpus_stats(users: Sequence[User], tweets: Sequence[Tweet]) -> CorpusStats:
    """Per-target label counts and role distributions (percent, half-up to 2 decimals)."""
    user_by_id = {u.id: u for u in users}
    targets: dict[str, TargetStats] = {}
    for user in users:
        stats = targets.setdefault(user.target, TargetStats(labels={l.value: 0 for l in LABEL_ORDER}))
        stats.users += 1
        if user.label is None:
            stats.unlabeled += 1
        else:
            stats.labels[user.label.value] += 1
    for tweet in tweets:
        author = user_by_id.get(tweet.author_id)
        if author is not None:
            targets[author.target].tweets += 1
    for stats in targets.values():
        labeled = stats.users - stats.unlabeled
        stats.label_percent = {k: percent_half_up(v, labeled) for k, v in stats.labels.items()}

    role_counts = Counter(u.role.value for u in users)
    tweet_role_counts = Counter(user_by_id[t.author_id].role.value for t in tweets if t.author_id in user_by_id)
    return CorpusStats(
        targets=dict(sorted(targets.items())),
        total_users=len(users),
        total_tweets=len(tweets),
        role_percent={r.value: percent_half_up(role_counts[r.value], len(users)) for r in Role},
        role_tweet_percent={r.value: percent_half_up(tweet_role_counts[r.value], len(tweets)) for r in Role},
    )
