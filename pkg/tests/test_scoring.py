import json

import numpy as np
import pytest
import requests

from dialogforge.errors import (InputError, ScoringError, TransportError,
                                UnsupportedOperationError)
from dialogforge.scoring import (BuiltinHashEmbedder, RemoteScoringClient,
                                 ScoreCache, ScoreProviderConfig,
                                 build_provider, cosine)
from dialogforge.textmetrics import tokenize


class FakeResponse:
    def __init__(self, payload, status_code=200):
        self._payload = payload
        self.status_code = status_code
        self.text = json.dumps(payload)

    def json(self):
        return self._payload


class FakeSession:
    """Records requests; serves embeddings via the builtin hasher and a
    fixed NLI score, so remote-client plumbing is testable offline."""

    def __init__(self, nli_score=0.9, fail=False):
        self.calls = []
        self.nli_score = nli_score
        self.fail = fail
        self._embedder = BuiltinHashEmbedder()

    def post(self, url, json=None, timeout=None, headers=None):
        if self.fail:
            raise requests.ConnectionError("refused")
        self.calls.append((url, json))
        if url.endswith("/embed"):
            vectors = [v.tolist() for v in self._embedder.embed(json["texts"])]
            return FakeResponse({"vectors": vectors, "dim": len(vectors[0])})
        if url.endswith("/nli"):
            return FakeResponse({"entailment": self.nli_score})
        return FakeResponse({"error": "not found"}, status_code=404)


class TestCosine:
    def test_identity(self):
        v = np.array([0.6, 0.8])
        assert cosine(v, v) == 1.0

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_antipodal(self):
        v = np.array([0.6, 0.8])
        assert cosine(v, -v) == -1.0

    def test_clamped(self):
        v = np.full(64, 1 / 8.0)
        assert cosine(v, v) <= 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            cosine([1.0, 0.0], [1.0, 0.0, 0.0])


class TestBuiltinEmbedder:
    def test_deterministic(self):
        e = BuiltinHashEmbedder()
        a, b = e.embed(["a", "a"])
        assert np.array_equal(a, b)

    def test_self_similarity(self):
        e = BuiltinHashEmbedder()
        assert cosine(e.embed(["x"])[0], e.embed(["x"])[0]) == 1.0

    def test_unit_norm(self):
        e = BuiltinHashEmbedder()
        for v in e.embed(["one two three", "a b a b", "zzz"]):
            assert abs(np.linalg.norm(v) - 1.0) < 1e-6

    def test_partial_overlap_strictly_between(self):
        e = BuiltinHashEmbedder()
        a, b = e.embed(["who played ardra", "who played ardra on star trek"])
        got = cosine(a, b)
        # oracle: bag-of-words overlap of the two hashed token multisets
        expected = 3 / np.sqrt(3 * 6)
        assert 0.0 < got < 1.0
        assert abs(got - expected) < 1e-9

    def test_token_disjoint_orthogonal(self):
        e = BuiltinHashEmbedder()
        a, b = e.embed(["alpha beta", "gamma delta"])
        assert set(tokenize("alpha beta")).isdisjoint(tokenize("gamma delta"))
        assert cosine(a, b) == 0.0

    def test_empty_text_rejected(self):
        with pytest.raises(InputError):
            BuiltinHashEmbedder().embed(["ok", "   "])

    def test_empty_batch_rejected(self):
        with pytest.raises(InputError):
            BuiltinHashEmbedder().embed([])

    def test_no_builtin_nli(self):
        with pytest.raises(UnsupportedOperationError):
            BuiltinHashEmbedder().nli("p", "h")


class TestRemoteClient:
    def test_embed_round_trip(self):
        session = FakeSession()
        client = RemoteScoringClient("http://svc", session=session)
        vectors = client.embed(["hello there", "hello there"])
        assert len(vectors) == 2
        assert np.array_equal(vectors[0], vectors[1])
        assert abs(np.linalg.norm(vectors[0]) - 1.0) < 1e-6

    def test_transport_error(self):
        client = RemoteScoringClient("http://svc", session=FakeSession(fail=True))
        with pytest.raises(TransportError):
            client.embed(["x"])

    def test_non_unit_vector_rejected(self):
        class BadSession(FakeSession):
            def post(self, url, json=None, timeout=None, headers=None):
                return FakeResponse({"vectors": [[1.0, 1.0]], "dim": 2})

        client = RemoteScoringClient("http://svc", session=BadSession())
        with pytest.raises(ScoringError):
            client.embed(["x"])

    def test_nli_range_and_value(self):
        client = RemoteScoringClient("http://svc", session=FakeSession(nli_score=0.42))
        assert client.nli("premise text", "hypothesis text") == 0.42

    def test_nli_empty_rejected(self):
        client = RemoteScoringClient("http://svc", session=FakeSession())
        with pytest.raises(InputError):
            client.nli("", "h")

    def test_nli_out_of_range_rejected(self):
        client = RemoteScoringClient("http://svc", session=FakeSession(nli_score=1.5))
        with pytest.raises(ScoringError):
            client.nli("p", "h")


class TestCache:
    def test_embed_cache_hits_skip_network(self, tmp_path):
        session = FakeSession()
        cache = ScoreCache(tmp_path / "cache.jsonl")
        client = RemoteScoringClient("http://svc", cache=cache, session=session)
        v1 = client.embed(["cached text"])
        v2 = client.embed(["cached text"])
        assert np.array_equal(v1[0], v2[0])
        assert len(session.calls) == 1

    def test_cache_survives_restart(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        s1 = FakeSession()
        RemoteScoringClient("http://svc", cache=ScoreCache(path), session=s1).nli("p", "h")
        s2 = FakeSession(nli_score=0.1)  # would differ if re-fetched
        score = RemoteScoringClient("http://svc", cache=ScoreCache(path),
                                    session=s2).nli("p", "h")
        assert score == 0.9
        assert s2.calls == []

    def test_cache_never_changes_scores(self, tmp_path):
        with_cache = RemoteScoringClient(
            "http://svc", cache=ScoreCache(tmp_path / "c.jsonl"),
            session=FakeSession(nli_score=0.7))
        without = RemoteScoringClient("http://svc", session=FakeSession(nli_score=0.7))
        assert with_cache.nli("p", "h") == without.nli("p", "h")

    def test_cache_file_schema(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        client = RemoteScoringClient("http://svc", cache=ScoreCache(path),
                                     session=FakeSession())
        client.nli("p", "h")
        entry = json.loads(path.read_text().splitlines()[0])
        assert set(entry) == {"key", "kind", "response"}
        assert entry["kind"] == "nli"


class TestProviderConfig:
    def test_builtin(self):
        assert isinstance(build_provider(ScoreProviderConfig()), BuiltinHashEmbedder)

    def test_remote_requires_endpoint(self):
        with pytest.raises(InputError):
            ScoreProviderConfig(kind="remote")

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            ScoreProviderConfig(kind="quantum")
