"""Similarity math and the deterministic fallback embedder."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cckg.embedding import (
    DimensionMismatch,
    EmbedderConfig,
    EmptyPool,
    EmptyText,
    HashedBagEmbedder,
    RemoteEmbedder,
    cosine,
    make_embedder,
    nearest,
    unit,
)

EMB = HashedBagEmbedder()


class TestCosine:
    def test_self_similarity(self):
        [v] = EMB.embed(["wash hands"])
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal_basis(self):
        e1 = np.zeros(4); e1[0] = 1.0
        e2 = np.zeros(4); e2[1] = 1.0
        assert cosine(e1, e2) == 0.0

    def test_hand_dot_product(self):
        # ((1,2,2)/3) . ((2,1,2)/3) = (2 + 2 + 4) / 9 = 8/9
        u = np.array([1.0, 2.0, 2.0]) / 3.0
        v = np.array([2.0, 1.0, 2.0]) / 3.0
        assert cosine(u, v) == pytest.approx(8.0 / 9.0, abs=1e-9)

    def test_symmetry(self):
        [u, v] = EMB.embed(["drink tea", "eat rice"])
        assert cosine(u, v) == cosine(v, u)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine(np.ones(3), np.ones(4))


class TestNearest:
    def test_single_entry_pool(self):
        [q] = EMB.embed(["greet elders"])
        assert nearest(q, [("only", q)]) == ("only", pytest.approx(1.0))

    def test_exact_match_among_orthogonal(self):
        basis = np.eye(4)
        pool = [(f"e{i}", basis[i]) for i in range(4)]
        item_id, score = nearest(basis[2], pool)
        assert item_id == "e2"
        assert score == pytest.approx(1.0)

    def test_matches_exhaustive_scan(self):
        texts = ["drink tea", "eat rice", "visit family", "give gifts", "light lanterns"]
        vectors = EMB.embed(texts)
        pool = [(f"id{i}", v) for i, v in enumerate(vectors)]
        [q] = EMB.embed(["share tea with family"])
        brute = sorted(pool, key=lambda pair: (-float(q @ pair[1]), pair[0]))[0]
        assert nearest(q, pool) == (brute[0], pytest.approx(float(q @ brute[1])))

    def test_tie_breaks_by_smallest_id(self):
        [v] = EMB.embed(["same text"])
        assert nearest(v, [("b", v), ("a", v)])[0] == "a"

    def test_empty_pool(self):
        with pytest.raises(EmptyPool):
            nearest(np.ones(2), [])


class TestHashedBagEmbedder:
    def test_deterministic(self):
        [a] = EMB.embed(["wash hands"])
        [b] = EMB.embed(["wash hands"])
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        for v in EMB.embed(["a", "b", "many words in this text"]):
            assert abs(np.linalg.norm(v) - 1.0) <= 1e-6

    def test_permutation_invariance(self):
        [a] = EMB.embed(["wash hands"])
        [b] = EMB.embed(["hands wash"])
        assert np.array_equal(a, b)

    def test_casefold_invariance(self):
        [a] = EMB.embed(["Wash HANDS"])
        [b] = EMB.embed(["wash hands"])
        assert np.array_equal(a, b)

    def test_empty_text_rejected(self):
        with pytest.raises(EmptyText):
            EMB.embed([""])
        with pytest.raises(EmptyText):
            EMB.embed(["   "])

    def test_no_word_tokens_still_embeds(self):
        [v] = EMB.embed(["!!!"])
        assert abs(np.linalg.norm(v) - 1.0) <= 1e-6

    def test_order_preserving_batch(self):
        vs = EMB.embed(["one", "two"])
        [one] = EMB.embed(["one"])
        [two] = EMB.embed(["two"])
        assert np.array_equal(vs[0], one)
        assert np.array_equal(vs[1], two)

    def test_overlap_cosine_matches_count_formula(self):
        # distinct-bucket tokens: cosine = shared / sqrt(n1 * n2)
        [a] = EMB.embed(["alpha beta gamma"])
        [b] = EMB.embed(["alpha beta delta"])
        singles = EMB.embed(["alpha", "beta", "gamma", "delta"])
        buckets = [int(np.nonzero(v)[0][0]) for v in singles]
        assert len(set(buckets)) == 4, "tokens collide; pick different test words"
        assert cosine(a, b) == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_exact_three_four_five_geometry(self):
        # counts (4, 3) give norm exactly 5; overlap on the count-4 token
        # with a single-token query lands cosine exactly on 4/5
        singles = EMB.embed(["tea", "cup"])
        buckets = [int(np.nonzero(v)[0][0]) for v in singles]
        assert len(set(buckets)) == 2, "tokens collide; pick different test words"
        [a] = EMB.embed(["tea tea tea tea cup cup cup"])
        [b] = EMB.embed(["tea"])
        assert cosine(a, b) == 0.8


@given(st.lists(st.sampled_from("abcdefg hij".split() + ["tea", "rice"]), min_size=1, max_size=6))
def test_bag_vector_is_permutation_invariant(tokens):
    text = " ".join(tokens)
    reversed_text = " ".join(reversed(tokens))
    [a] = EMB.embed([text])
    [b] = EMB.embed([reversed_text])
    assert np.array_equal(a, b)


class TestUnitHelper:
    def test_normalizes(self):
        v = unit(np.array([3.0, 4.0]))
        assert np.allclose(v, [0.6, 0.8])

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            unit(np.zeros(3))


class TestEmbedderConfig:
    def test_local_fallback(self):
        embedder = make_embedder(EmbedderConfig(dimension=128))
        assert isinstance(embedder, HashedBagEmbedder)
        assert embedder.fingerprint == "hashed-bag-128"

    def test_remote_requires_endpoint(self):
        with pytest.raises(ValueError):
            EmbedderConfig(backend="remote")

    def test_remote_construction(self):
        cfg = EmbedderConfig(
            backend="remote", base_url="http://e/v1", model="stsb-xlm-r-multilingual"
        )
        embedder = make_embedder(cfg)
        assert isinstance(embedder, RemoteEmbedder)
        assert embedder.fingerprint == "remote:stsb-xlm-r-multilingual"


class _FakeResponse:
    def __init__(self, status_code, payload=None):
        self.status_code = status_code
        self._payload = payload
        self.ok = 200 <= status_code < 300
        self.text = ""

    def json(self):
        return self._payload


class _FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)

    def post(self, url, json=None, headers=None, timeout=None):
        self.url = url
        return self.responses.pop(0)


class TestRemoteEmbedder:
    def test_normalizes_and_batches(self):
        rows = {"data": [{"embedding": [3.0, 4.0]}, {"embedding": [0.0, 2.0]}]}
        session = _FakeSession([_FakeResponse(200, rows)])
        emb = RemoteEmbedder("http://e/v1", "m", session=session, sleep=lambda _s: None)
        vectors = emb.embed(["a", "b"])
        assert session.url == "http://e/v1/embeddings"
        assert np.allclose(vectors[0], [0.6, 0.8])
        assert np.allclose(vectors[1], [0.0, 1.0])

    def test_retries_transient_then_succeeds(self):
        ok = {"data": [{"embedding": [1.0, 0.0]}]}
        session = _FakeSession([_FakeResponse(503), _FakeResponse(200, ok)])
        emb = RemoteEmbedder("http://e/v1", "m", session=session, sleep=lambda _s: None)
        vectors = emb.embed(["a"])
        assert np.allclose(vectors[0], [1.0, 0.0])


def test_exact_boundary_math_documented():
    """The 3-4-5 construction used by the threshold boundary tests."""
    assert math.sqrt(4 * 4 + 3 * 3) == 5.0
    assert 4.0 / 5.0 == 0.8
