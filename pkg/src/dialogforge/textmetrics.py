"""Deterministic lexical metrics: tokenizer, unigram recall, answer overlap.

No stemming, no stopwords; tokenization is lowercase Unicode alphanumeric
runs so scores are reproducible on any machine.
"""

from __future__ import annotations

import re
from collections import Counter

# maximal runs of alphanumeric characters, underscore excluded
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase tokens split on any run of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def rouge1_recall(reference: str, candidate: str) -> float:
    """Clipped-multiset unigram recall of `reference` within `candidate`.

    sum_w min(count_ref(w), count_cand(w)) / |ref tokens|; 0.0 when the
    reference has no tokens.
    """
    ref_tokens = tokenize(reference)
    if not ref_tokens:
        return 0.0
    ref_counts = Counter(ref_tokens)
    cand_counts = Counter(tokenize(candidate))
    hits = sum(min(n, cand_counts[w]) for w, n in ref_counts.items())
    return hits / len(ref_tokens)


def contains_overlap(haystack: str, needle: str) -> float:
    """Fraction of `needle` tokens present in `haystack`.

    Used for answer-leak detection: the needle is the gold answer and the
    haystack is the concatenated dialog text. 0.0 for an empty needle.
    """
    return rouge1_recall(needle, haystack)
