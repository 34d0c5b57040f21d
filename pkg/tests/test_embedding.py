"""Tests for embedders and feature assembly."""

import numpy as np
import pytest
from pydantic import ValidationError

from src.config import EmbedderSpec
from src.datamodel import Corpus, Tweet, build_graph
from src.embedding import (
    ExternalEmbedder,
    FeatureMatrix,
    HashingEmbedder,
    assemble_feature_matrix,
    create_embedder,
    embed_tweet,
    load_embedding_table,
    write_embedding_table,
)
from src.embedding.hashing import tokenize, user_sequence
from src.errors import EmbeddingError

from .conftest import make_tweet, make_user


class TestHashingEmbedder:
    """Tests for the hashing embedder."""

    def test_tokenize(self):
        """Test lowercasing, punctuation splitting and separator tokens."""
        assert tokenize("[CLS] Hello, World! [SEP]") == ["[cls]", "hello", "world", "[sep]"]

    def test_user_sequence(self):
        """Test description and tweets are joined with separators."""
        user = make_user("A", description="bio")
        seq = user_sequence(user, [make_tweet("t1", "A", "one"), make_tweet("t2", "A", "two")])
        assert seq == "[CLS] bio [SEP] one [SEP] two [SEP]"

    def test_unit_norm(self):
        """Test non-degenerate embeddings are L2-normalized."""
        embedding = HashingEmbedder(dim=64).embed_tweet(make_tweet("t", "A", "biden economy plan"))
        assert not embedding.degenerate
        assert np.linalg.norm(embedding.vector) == pytest.approx(1.0)

    def test_deterministic_per_seed(self):
        """Test the same seed reproduces vectors and another seed changes them."""
        tweet = make_tweet("t", "A", "some words here")
        first = HashingEmbedder(dim=32, seed=1).embed_tweet(tweet).vector
        np.testing.assert_array_equal(first, HashingEmbedder(dim=32, seed=1).embed_tweet(tweet).vector)
        assert not np.array_equal(first, HashingEmbedder(dim=32, seed=2).embed_tweet(tweet).vector)

    def test_repetition_cancels(self):
        """Test a token repeated five times embeds exactly like one occurrence."""
        embedder = HashingEmbedder(dim=64)
        once = embedder.embed_tweet(make_tweet("t1", "A", "stance")).vector
        five = embedder.embed_tweet(make_tweet("t2", "A", "stance stance stance stance stance")).vector
        np.testing.assert_array_equal(once, five)

    def test_disjoint_vocabularies_nearly_orthogonal(self):
        """Test texts sharing no token stay below 0.2 absolute cosine at width 4096 over 100 seeds."""
        left = make_tweet("l", "A", " ".join(f"alpha{i}" for i in range(20)))
        right = make_tweet("r", "A", " ".join(f"beta{i}" for i in range(20)))
        cosines = []
        for seed in range(100):
            embedder = HashingEmbedder(dim=4096, seed=seed)
            cosines.append(abs(float(embedder.embed_tweet(left).vector @ embedder.embed_tweet(right).vector)))
        assert max(cosines) < 0.2

    def test_empty_user_is_degenerate(self):
        """Test a user with no description and no tweets gets a zero vector."""
        embedding = HashingEmbedder(dim=16).embed_user(make_user("A"), [])
        assert embedding.degenerate
        assert not np.any(embedding.vector)

    def test_degenerate_tweet(self):
        """Test an empty flagged tweet embeds to zero."""
        tweet = Tweet(id="t", author_id="A", text="", degenerate=True)
        assert HashingEmbedder(dim=16).embed_tweet(tweet).degenerate

    def test_create_embedder_cached(self):
        """Test the factory reuses embedders and default widths apply."""
        spec = EmbedderSpec(kind="hashing", seed=4)
        assert spec.width == 256
        assert create_embedder(spec) is create_embedder(EmbedderSpec(kind="hashing", seed=4))
        assert embed_tweet(make_tweet("t", "A", "x y"), spec).vector.shape == (256,)


class TestExternalEmbedder:
    """Tests for the table-backed embedder."""

    def test_lookup(self, tmp_path):
        """Test users are looked up by user id and tweets by tweet id."""
        write_embedding_table([("A", np.ones(8)), ("t1", np.arange(8.0))], tmp_path / "emb.jsonl")
        embedder = ExternalEmbedder.from_file(tmp_path / "emb.jsonl", 8)
        np.testing.assert_array_equal(embedder.embed_user(make_user("A"), []).vector, np.ones(8))
        np.testing.assert_array_equal(embedder.embed_tweet(make_tweet("t1", "A")).vector, np.arange(8.0))

    def test_missing_id(self, tmp_path):
        """Test a missing node id raises."""
        embedder = ExternalEmbedder({}, 8)
        with pytest.raises(EmbeddingError, match="no embedding for B"):
            embedder.embed_user(make_user("B"), [])

    def test_width_mismatch(self, tmp_path):
        """Test rows of the wrong width are rejected."""
        write_embedding_table([("A", np.ones(4))], tmp_path / "emb.jsonl")
        with pytest.raises(EmbeddingError):
            load_embedding_table(tmp_path / "emb.jsonl", 8)

    def test_round_trip_exact(self, tmp_path):
        """Test float values survive the table file bit for bit."""
        vector = np.random.default_rng(0).normal(size=8)
        write_embedding_table([("A", vector)], tmp_path / "emb.jsonl")
        np.testing.assert_array_equal(load_embedding_table(tmp_path / "emb.jsonl", 8)["A"], vector)


class TestFeatureMatrix:
    """Tests for assemble_feature_matrix."""

    def test_rows_follow_node_order(self, small_corpus):
        """Test user rows come first and tweet rows use tweet embeddings."""
        users = small_corpus.users
        own = [t for u in users for t in small_corpus.own_tweets(u)]
        graph = build_graph(users, own, {"A": [small_corpus.tweet("b1")]})
        table = {u.id: np.full(4, float(i)) for i, u in enumerate(users)}
        table.update({t.id: np.full(4, 10.0 + i) for i, t in enumerate(small_corpus.tweets)})
        features = assemble_feature_matrix(graph, small_corpus, ExternalEmbedder(table, 4))

        assert features.rows == graph.num_nodes
        np.testing.assert_array_equal(features.values[graph.user_index("C")], table["C"])
        b1_for_a = graph.node_index["b1@A"]
        b1_for_b = graph.node_index["b1@B"]
        np.testing.assert_array_equal(features.values[b1_for_a], features.values[b1_for_b])

    def test_degenerate_rows_flagged(self):
        """Test degenerate embeddings are recorded per row."""
        users = [make_user("A", ("a1",))]
        tweets = [Tweet(id="a1", author_id="A", text="", degenerate=True)]
        corpus = Corpus(users, tweets)
        graph = build_graph(users, tweets, {})
        features = assemble_feature_matrix(graph, corpus, HashingEmbedder(dim=8))
        assert features.degenerate.tolist() == [True, True]

    def test_non_finite_rejected(self):
        """Test a NaN feature raises EmbeddingError rather than a validation error."""
        values = np.zeros((2, 3))
        values[1, 2] = np.nan
        with pytest.raises(EmbeddingError, match="non-finite"):
            FeatureMatrix(values=values, degenerate=np.zeros(2, dtype=bool))

    def test_embedding_frozen(self):
        """Test embeddings cannot be reassigned after construction."""
        embedding = HashingEmbedder(dim=8).embed_tweet(make_tweet("t", "A", "words"))
        with pytest.raises(ValidationError):
            embedding.degenerate = True
