"""Model backends, selected by model id.

Real ids load sentence-transformers / transformers weights once at
startup. Two built-in ids exist for offline deployments and tests:

  hash://bow-256     deterministic hashed bag-of-words embedder
  overlap://lexical  deterministic lexical entailment heuristic

Both are stateless and need no downloads; they approximate the real
models well enough for relative comparisons, not absolute quality.
"""

from __future__ import annotations

import hashlib
import re
from typing import Sequence

import numpy as np

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_NEGATIONS = {"not", "no", "never", "none", "neither", "nor", "nobody", "nothing"}


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class HashEmbedder:
    """Unit-normalized hashed bag-of-words vectors."""

    def __init__(self, dim: int = 256):
        self.dim = dim

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            tokens = _tokens(text) or [text.strip()]
            for tok in tokens:
                digest = hashlib.sha256(tok.encode("utf-8")).digest()
                out[i, digest[0] % self.dim] += 1.0
            out[i] /= np.linalg.norm(out[i])
        return out


class SentenceTransformerEmbedder:
    def __init__(self, model_id: str):
        from sentence_transformers import SentenceTransformer

        self.model = SentenceTransformer(model_id)

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        vectors = self.model.encode(list(texts), convert_to_numpy=True,
                                    normalize_embeddings=True)
        return np.asarray(vectors, dtype=np.float64)


class LexicalNli:
    """Entailment as content-token recall of the hypothesis within the
    premise, flipped when exactly one side is negated."""

    def score(self, premise: str, hypothesis: str) -> float:
        prem = _tokens(premise)
        hyp = _tokens(hypothesis)
        hyp_content = [t for t in hyp if t not in _NEGATIONS]
        if not hyp_content:
            return 0.5
        prem_set = set(prem)
        base = sum(1 for t in hyp_content if t in prem_set) / len(hyp_content)
        prem_negated = any(t in _NEGATIONS for t in prem)
        hyp_negated = any(t in _NEGATIONS for t in hyp)
        if prem_negated != hyp_negated:
            return 1.0 - base
        return base


class TransformersNli:
    def __init__(self, model_id: str):
        import torch
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        self.torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForSequenceClassification.from_pretrained(model_id)
        self.model.eval()
        labels = {v.lower(): k for k, v in self.model.config.id2label.items()}
        self.entailment_index = labels.get("entailment")
        if self.entailment_index is None:
            raise ValueError(f"model {model_id} has no 'entailment' label")

    def score(self, premise: str, hypothesis: str) -> float:
        inputs = self.tokenizer(premise, hypothesis, return_tensors="pt",
                                truncation=True)
        with self.torch.no_grad():
            logits = self.model(**inputs).logits[0]
        probs = self.torch.softmax(logits, dim=-1)
        return float(probs[self.entailment_index])


def load_embedder(model_id: str):
    if model_id.startswith("hash://"):
        suffix = model_id.removeprefix("hash://")
        dim = int(suffix.rsplit("-", 1)[-1]) if "-" in suffix else 256
        return HashEmbedder(dim)
    return SentenceTransformerEmbedder(model_id)


def load_nli(model_id: str):
    if model_id.startswith("overlap://"):
        return LexicalNli()
    return TransformersNli(model_id)
