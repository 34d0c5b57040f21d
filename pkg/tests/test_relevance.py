"""Tests for the relevance prompt protocol, clients and filters."""

import asyncio
import json

import httpx
import numpy as np
import pytest

from src.config import LlmEndpointConfig
from src.datamodel import Corpus, Role
from src.errors import LlmRequestError, RelevanceError
from src.relevance import (
    ChatCompletionsClient,
    FilterReport,
    PromptChunk,
    RelevanceScore,
    ScriptedLlmClient,
    ScriptedResponse,
    VerdictCache,
    build_prompt,
    filter_cosine,
    filter_llm,
    filter_users_llm,
    load_scripted_table,
    parse_scores,
    render_scores,
    retained_followee_tweets,
    score_from_cosine,
)
from src.relevance.base import LlmClient

from .conftest import make_tweet, make_user

TABLE_KEYS = ["348159742_1", "3094891_1", "3094891_2", "393705422_1"]
TABLE_OUTPUT = "(348159742_1:1),(3094891_1:2),(3094891_2:1),(393705422_1:2)"


def table_followee_tweets():
    return [
        ("348159742", make_tweet("x1", "348159742", "unrelated sports chatter")),
        ("3094891", make_tweet("x2", "3094891", "debate night recap")),
        ("3094891", make_tweet("x3", "3094891", "lunch photos")),
        ("393705422", make_tweet("x4", "393705422", "polling numbers today")),
    ]


class CountingClient(LlmClient):
    """Scripted client that counts requests and can delay answers."""

    provenance = "mock"
    model_name = "counting"

    def __init__(self, scores: dict[str, int], delays: dict[str, float] | None = None):
        self.scores = scores
        self.delays = delays or {}
        self.calls = 0

    async def complete(self, chunk: PromptChunk) -> str:
        self.calls += 1
        await asyncio.sleep(self.delays.get(chunk.user_id, 0.0))
        return render_scores({k: self.scores.get(tid, 1) for k, tid in chunk.key_to_tweet.items()})


class TestBuildPrompt:
    """Tests for build_prompt."""

    def test_four_blocks_in_order(self):
        """Test one own tweet and one followee tweet give one key F1_1."""
        user = make_user("U", ("u1",), ("F1",))
        chunks = build_prompt(user, [make_tweet("u1", "U", "hello")], [("F1", make_tweet("f", "F1", "hi"))])
        assert len(chunks) == 1
        text = chunks[0].text
        positions = [text.index(h) for h in ("Instruction:", "User's Tweets:", "Followees' Tweets:", "Output format:")]
        assert positions == sorted(positions)
        assert '1:"hello"' in text
        assert "F1_1:hi" in text
        assert "(tweet number:corresponding score)" in text
        assert "1 means no association" in text and "3 means strong association" in text
        assert chunks[0].keys == ["F1_1"]

    def test_table_style_keys(self):
        """Test keys number each followee's tweets from 1."""
        user = make_user("U", followee_ids=("348159742", "3094891", "393705422"))
        chunks = build_prompt(user, [], table_followee_tweets())
        assert chunks[0].keys == TABLE_KEYS

    def test_chunking(self):
        """Test 40 followee tweets with a limit of 25 give 25 + 15."""
        user = make_user("U", followee_ids=("F",))
        pairs = [("F", make_tweet(f"t{i}", "F")) for i in range(40)]
        chunks = build_prompt(user, [], pairs, max_tweets_per_prompt=25)
        assert [len(c.keys) for c in chunks] == [25, 15]
        assert chunks[1].keys[0] == "F_26"

    def test_newlines_flattened(self):
        """Test multi-line tweets stay on one prompt line."""
        user = make_user("U", followee_ids=("F",))
        chunks = build_prompt(user, [], [("F", make_tweet("t", "F", "line one\nline two"))])
        assert "F_1:line one line two" in chunks[0].text


class TestParseScores:
    """Tests for parse_scores and render_scores."""

    def test_table_output(self):
        """Test the documented example output parses exactly."""
        scores = parse_scores(TABLE_OUTPUT, TABLE_KEYS)
        assert scores == {"348159742_1": 1, "3094891_1": 2, "3094891_2": 1, "393705422_1": 2}

    def test_whitespace_and_punctuation(self):
        """Test spaces inside pairs and trailing text are tolerated."""
        scores = parse_scores("Scores: ( a_1 : 3 ), (b_1:2).", ["a_1", "b_1"])
        assert scores == {"a_1": RelevanceScore.STRONG, "b_1": RelevanceScore.WEAK}

    def test_out_of_range(self):
        """Test an out-of-range score becomes 1."""
        assert parse_scores("(a:5)", ["a"]) == {"a": RelevanceScore.NONE}

    def test_missing_and_unknown_keys(self):
        """Test missing keys become 1 and unknown keys are dropped."""
        scores = parse_scores("(a:3), (zz:2)", ["a", "b"])
        assert scores == {"a": 3, "b": 1}

    def test_unparseable(self):
        """Test a response without pairs is an error."""
        with pytest.raises(RelevanceError, match="unparseable response"):
            parse_scores("no pairs here", ["a"])

    def test_render_parse_identity(self):
        """Test parsing a rendered map returns the map."""
        scores = {"k_1": 1, "k_2": 3, "j_1": 2}
        assert parse_scores(render_scores(scores), list(scores)) == scores


class TestCosine:
    """Tests for the cosine filter."""

    def test_boundaries(self):
        """Test cosine 0.85 scores 3 and cosine 0.70 scores 2."""
        strong = filter_cosine(np.array([1.0, 0, 0, 0, 0]), {"t": np.array([17.0, 9, 5, 2, 1])})
        weak = filter_cosine(np.array([1.0, 0, 0, 0]), {"t": np.array([7.0, 7, 1, 1])})
        assert strong.scores["t"] == RelevanceScore.STRONG
        assert weak.scores["t"] == RelevanceScore.WEAK
        assert score_from_cosine(0.6999) == RelevanceScore.NONE

    def test_identical_vectors(self):
        """Test identical nonzero vectors score 3."""
        v = np.array([0.3, -1.2, 2.0])
        assert filter_cosine(v, {"t": v}).scores["t"] == RelevanceScore.STRONG

    def test_zero_norm(self):
        """Test zero vectors score 1."""
        report = filter_cosine(np.zeros(3), {"t": np.ones(3)})
        assert report.scores["t"] == RelevanceScore.NONE
        assert report.provenance == "cosine"

    def test_scale_invariant(self):
        """Test positive scaling leaves scores unchanged."""
        u = np.array([1.0, 0.0, 0.0])
        vecs = {"a": np.array([0.9, 0.3, 0.0]), "b": np.array([0.75, 0.6, 0.0]), "c": np.array([0.2, 1.0, 0.5])}
        base = filter_cosine(u, vecs).scores
        scaled = filter_cosine(3.7 * u, {k: 0.01 * v for k, v in vecs.items()}).scores
        assert base == scaled

    def test_dim_mismatch(self):
        """Test vectors of different widths are rejected."""
        with pytest.raises(RelevanceError):
            filter_cosine(np.ones(3), {"t": np.ones(4)})


class TestFilterReport:
    """Tests for retention."""

    def test_retention_rule(self):
        """Test scores {1, 2, 3} retain the 2 and the 3."""
        report = FilterReport(user_id="U", scores={"t1": 1, "t2": 2, "t3": 3}, provenance="mock")
        assert report.retained == ["t2", "t3"]
        assert report.discarded == ["t1"]

    def test_all_discarded_falls_back(self, small_corpus):
        """Test a user with every tweet scored 1 keeps no followee tweets."""
        reports = {"A": FilterReport(user_id="A", scores={"b1": 1, "b2": 1, "c1": 1}, provenance="mock")}
        assert retained_followee_tweets(small_corpus, small_corpus.users, reports) == {}

    def test_no_reports_keeps_everything(self, small_corpus):
        """Test filtering off keeps every followee tweet."""
        kept = retained_followee_tweets(small_corpus, small_corpus.users, None)
        assert [t.id for t in kept["A"]] == ["b1", "b2", "c1"]


class TestFilterLlm:
    """Tests for LLM-backed filtering."""

    async def test_table_output_through_mock(self):
        """Test the documented output on its keys retains the 2-scored tweets."""
        user = make_user("U", followee_ids=("348159742", "3094891", "393705422"))
        client = ScriptedLlmClient({"U": ScriptedResponse(user_id="U", response=TABLE_OUTPUT)})
        report = await filter_llm(user, [], table_followee_tweets(), client)
        assert report.retained == ["x2", "x4"]
        assert report.provenance == "mock"

    async def test_scripted_scores_by_tweet(self, small_corpus):
        """Test score maps are rendered for each chunk, unlisted tweets scoring 1."""
        client = ScriptedLlmClient({"A": ScriptedResponse(user_id="A", scores={"b1": 3, "c1": 2})})
        user = small_corpus.user("A")
        report = await filter_llm(user, small_corpus.own_tweets(user), small_corpus.followee_tweets(user), client, 2)
        assert report.scores == {"b1": 3, "b2": 1, "c1": 2}

    async def test_missing_script_entry(self, small_corpus):
        """Test a user with no scripted answer is an error."""
        user = small_corpus.user("A")
        with pytest.raises(RelevanceError):
            await filter_llm(user, [], small_corpus.followee_tweets(user), ScriptedLlmClient({}))

    async def test_completion_order_irrelevant(self):
        """Test reports do not depend on which request finishes first."""
        users = [make_user(f"U{i}", followee_ids=("F",)) for i in range(4)]
        followee = make_user("F", ("f1", "f2"), role=Role.FOLLOWEE)
        corpus = Corpus(users + [followee], [make_tweet("f1", "F"), make_tweet("f2", "F")])
        scores = {"f1": 3, "f2": 1}
        slow_first = CountingClient(scores, {"U0": 0.05, "U1": 0.0, "U2": 0.03, "U3": 0.01})
        in_order = CountingClient(scores)
        a = await filter_users_llm(corpus, users, slow_first, concurrency=4)
        b = await filter_users_llm(corpus, users, in_order, concurrency=1)
        assert a == b
        assert list(a) == ["U0", "U1", "U2", "U3"]

    async def test_cache_prevents_repeat_requests(self, small_corpus, tmp_path):
        """Test a rerun with a cache sends no requests and the file is compacted."""
        path = tmp_path / "cache.jsonl"
        first = CountingClient({"b1": 3, "b2": 1, "c1": 2})
        reports = await filter_users_llm(small_corpus, small_corpus.users, first, cache=VerdictCache(path))
        assert first.calls == 1

        second = CountingClient({})
        again = await filter_users_llm(small_corpus, small_corpus.users, second, cache=VerdictCache(path))
        assert second.calls == 0
        assert again == reports

        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert [(r["user_id"], r["tweet_id"]) for r in rows] == [("A", "b1"), ("A", "b2"), ("A", "c1")]
        assert rows[0] == {"user_id": "A", "tweet_id": "b1", "model": "counting", "score": 3}

    def test_scripted_table_file(self, tmp_path):
        """Test the scripted table loads from a line-delimited file."""
        path = tmp_path / "mock.jsonl"
        path.write_text('{"user_id": "A", "scores": {"b1": 3}}\n{"user_id": "B", "response": "(x:1)"}\n')
        table = load_scripted_table(path)
        assert table["A"].scores == {"b1": 3}
        assert table["B"].response == "(x:1)"


def endpoint(**overrides) -> LlmEndpointConfig:
    values = {"base_url": "http://llm.test/v1", "model": "test-model", "backoff_seconds": 0.0, "max_retries": 2}
    values.update(overrides)
    return LlmEndpointConfig(**values)


def completion(content: str) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


CHUNK = PromptChunk(user_id="U", text="prompt", key_to_tweet={"F_1": "t1"})


class TestChatCompletionsClient:
    """Tests for the HTTP client."""

    async def test_request_shape(self, monkeypatch):
        """Test the body, URL and bearer key of a request."""
        monkeypatch.setenv("TEST_LLM_KEY", "secret")
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["url"] = str(request.url)
            seen["auth"] = request.headers.get("authorization")
            seen["body"] = json.loads(request.content)
            return completion("(F_1:3)")

        client = ChatCompletionsClient(endpoint(api_key_env="$TEST_LLM_KEY"), transport=httpx.MockTransport(handler))
        assert await client.complete(CHUNK) == "(F_1:3)"
        assert seen["url"] == "http://llm.test/v1/chat/completions"
        assert seen["auth"] == "Bearer secret"
        assert seen["body"] == {"model": "test-model", "messages": [{"role": "user", "content": "prompt"}], "temperature": 0.0}

    async def test_retries_transient_failures(self):
        """Test 503 and 429 responses are retried until success."""
        statuses = iter([503, 429])
        calls = []

        def handler(request: httpx.Request) -> httpx.Response:
            calls.append(1)
            status = next(statuses, 200)
            return completion("(F_1:2)") if status == 200 else httpx.Response(status, text="busy")

        client = ChatCompletionsClient(endpoint(), transport=httpx.MockTransport(handler))
        assert await client.complete(CHUNK) == "(F_1:2)"
        assert len(calls) == 3

    async def test_exhausted_retries(self):
        """Test the error carries the last status and body."""
        client = ChatCompletionsClient(
            endpoint(max_retries=1), transport=httpx.MockTransport(lambda r: httpx.Response(500, text="boom"))
        )
        with pytest.raises(LlmRequestError) as exc:
            await client.complete(CHUNK)
        assert exc.value.status_code == 500
        assert exc.value.body == "boom"

    async def test_client_error_not_retried(self):
        """Test a 400 fails on the first attempt."""
        calls = []

        def handler(request: httpx.Request) -> httpx.Response:
            calls.append(1)
            return httpx.Response(400, text="bad request")

        client = ChatCompletionsClient(endpoint(), transport=httpx.MockTransport(handler))
        with pytest.raises(LlmRequestError):
            await client.complete(CHUNK)
        assert len(calls) == 1

    async def test_connect_error(self):
        """Test connection failures are retried then reported."""
        def handler(request: httpx.Request) -> httpx.Response:
            raise httpx.ConnectError("refused", request=request)

        client = ChatCompletionsClient(endpoint(max_retries=1), transport=httpx.MockTransport(handler))
        with pytest.raises(LlmRequestError) as exc:
            await client.complete(CHUNK)
        assert exc.value.status_code == 0


class TestMockLlmService:
    """Tests against the mock chat-completions app in-process."""

    async def test_token_overlap_scoring(self, small_corpus, mock_llm_app):
        """Test the wire path end to end through the mock service."""
        client = ChatCompletionsClient(
            endpoint(base_url="http://mock/v1"), transport=httpx.ASGITransport(app=mock_llm_app)
        )
        reports = await filter_users_llm(small_corpus, small_corpus.users, client)
        assert reports["A"].scores == {"b1": 3, "b2": 1, "c1": 3}
        assert reports["A"].retained == ["b1", "c1"]

    async def test_injected_failures_recovered(self, small_corpus, mock_llm_app):
        """Test transient 503s from the service are retried."""
        mock_llm_app.state.fail_remaining = 2
        try:
            client = ChatCompletionsClient(
                endpoint(base_url="http://mock/v1", max_retries=3), transport=httpx.ASGITransport(app=mock_llm_app)
            )
            user = small_corpus.user("A")
            report = await filter_llm(user, small_corpus.own_tweets(user), small_corpus.followee_tweets(user), client)
            assert report.retained == ["b1", "c1"]
        finally:
            mock_llm_app.state.fail_remaining = 0
