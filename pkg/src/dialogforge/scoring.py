"""Semantic scoring providers: embeddings and NLI entailment.

Two embedding providers exist: a remote HTTP client speaking the
/embed + /nli wire contract, and a deterministic built-in fallback that
hashes tokens into a 256-bucket bag-of-words vector. The builtin keeps
the whole test suite offline; production runs point at a real model
behind the HTTP contract.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import requests

from .errors import InputError, ScoringError, TransportError, UnsupportedOperationError
from .records import canonical_json

BUILTIN_DIM = 256


def cosine(a, b) -> float:
    """Dot product of unit vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if np.array_equal(a, b):
        # identical vectors must score exactly 1.0; the dot product of a
        # unit vector with itself can round to just under it
        return 1.0
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


@dataclass(frozen=True)
class ScoreProviderConfig:
    kind: str = "builtin_hash"  # builtin_hash | remote
    endpoint: Optional[str] = None
    timeout: float = 30.0
    cache_path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("builtin_hash", "remote"):
            raise InputError(f"unknown scorer kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise InputError("remote scorer requires an endpoint")


def _check_texts(texts: Sequence[str]):
    if not texts:
        raise InputError("embed() requires at least one text")
    for t in texts:
        if not t.strip():
            raise InputError("embed() texts must be non-empty after trimming")


class BuiltinHashEmbedder:
    """Hashed bag-of-words embedder: SHA-256 each token into one of 256
    buckets, accumulate counts, L2-normalize. Token-disjoint strings get
    near-orthogonal vectors; identical strings get identical vectors."""

    dim = BUILTIN_DIM

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        from .textmetrics import tokenize

        _check_texts(texts)
        out = []
        for text in texts:
            tokens = tokenize(text)
            if not tokens:
                # punctuation-only text: hash the trimmed raw string so the
                # vector is still unit-norm and deterministic
                tokens = [text.strip()]
            vec = np.zeros(self.dim, dtype=np.float64)
            for tok in tokens:
                digest = hashlib.sha256(tok.encode("utf-8")).digest()
                vec[digest[0]] += 1.0
            vec /= np.linalg.norm(vec)
            out.append(vec)
        return out

    def nli(self, premise: str, hypothesis: str) -> float:
        raise UnsupportedOperationError("builtin scorer has no NLI model; "
                                        "configure a remote scoring endpoint")


class ScoreCache:
    """Append-only JSONL cache of scoring responses, keyed by request hash."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, object] = {}
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if line:
                        entry = json.loads(line)
                        self._entries[entry["key"]] = entry["response"]

    def get(self, key: str):
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, kind: str, response):
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as f:
                f.write(canonical_json({"key": key, "kind": kind, "response": response}))
                f.write("\n")


def request_key(kind: str, payload: dict) -> str:
    return hashlib.sha256(
        canonical_json({"kind": kind, "payload": payload}).encode("utf-8")
    ).hexdigest()


class RemoteScoringClient:
    """HTTP client for the /embed and /nli scoring contract."""

    def __init__(self, endpoint: str, timeout: float = 30.0, cache: Optional[ScoreCache] = None,
                 session: Optional[requests.Session] = None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.cache = cache
        self.session = session or requests.Session()

    def _post(self, route: str, payload: dict) -> dict:
        try:
            resp = self.session.post(self.endpoint + route, json=payload,
                                     timeout=self.timeout)
        except requests.RequestException as e:
            raise TransportError(f"scoring service unreachable at {self.endpoint}{route}: {e}") from e
        if resp.status_code != 200:
            raise ScoringError(f"scoring service returned {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as e:
            raise ScoringError(f"scoring service returned non-JSON body: {resp.text[:200]}") from e

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        _check_texts(texts)
        key = request_key("embed", {"texts": list(texts)})
        body = self.cache.get(key) if self.cache else None
        if body is None:
            body = self._post("/embed", {"texts": list(texts)})
            if self.cache:
                self.cache.put(key, "embed", body)
        try:
            vectors = [np.asarray(v, dtype=np.float64) for v in body["vectors"]]
        except (KeyError, TypeError) as e:
            raise ScoringError(f"malformed /embed response: {body}") from e
        if len(vectors) != len(texts):
            raise ScoringError(f"expected {len(texts)} vectors, got {len(vectors)}")
        for v in vectors:
            norm = float(np.linalg.norm(v))
            if abs(norm - 1.0) > 1e-6:
                raise ScoringError(f"provider returned non-unit vector (norm {norm})")
        return vectors

    def nli(self, premise: str, hypothesis: str) -> float:
        if not premise or not hypothesis:
            raise InputError("nli premise and hypothesis must be non-empty")
        key = request_key("nli", {"premise": premise, "hypothesis": hypothesis})
        body = self.cache.get(key) if self.cache else None
        if body is None:
            body = self._post("/nli", {"premise": premise, "hypothesis": hypothesis})
            if self.cache:
                self.cache.put(key, "nli", body)
        try:
            score = float(body["entailment"])
        except (KeyError, TypeError, ValueError) as e:
            raise ScoringError(f"malformed /nli response: {body}") from e
        if not 0.0 <= score <= 1.0:
            raise ScoringError(f"entailment score out of range: {score}")
        return score


def build_provider(cfg: ScoreProviderConfig):
    if cfg.kind == "builtin_hash":
        return BuiltinHashEmbedder()
    cache = ScoreCache(cfg.cache_path) if cfg.cache_path else None
    return RemoteScoringClient(cfg.endpoint, timeout=cfg.timeout, cache=cache)
