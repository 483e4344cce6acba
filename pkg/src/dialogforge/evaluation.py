"""Query-generation evaluation: embedding similarity, unigram recall, and
Recall@10 over search-result URLs, plus the response-factuality scorer.

Search results come from recorded fixtures by default; live search exists
behind an explicit client with an API key read from the environment.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence
from urllib.parse import urlsplit

import requests

from .errors import FixtureMissError, InputError, TransportError
from .records import EvalRecord, canonical_json
from .scoring import cosine
from .textmetrics import rouge1_recall

MAX_URLS = 10

FACTUALITY_HYPOTHESIS = "The answer to the question {question} is {response}"


def normalize_url(url: str) -> str:
    """Lowercase host, strip scheme, strip trailing slash, drop fragment."""
    raw = url.strip()
    if "://" not in raw:
        raw = "http://" + raw
    parts = urlsplit(raw)
    normalized = parts.netloc.lower() + parts.path.rstrip("/")
    if parts.query:
        normalized += "?" + parts.query
    return normalized


@dataclass(frozen=True)
class SearchResultPage:
    query: str
    urls: tuple = ()

    @classmethod
    def build(cls, query: str, urls: Sequence[str]) -> "SearchResultPage":
        """Normalize, deduplicate, truncate to the top 10."""
        seen = []
        for url in urls:
            n = normalize_url(url)
            if n and n not in seen:
                seen.append(n)
            if len(seen) == MAX_URLS:
                break
        return cls(query=query, urls=tuple(seen))


def recall_at_10(gold_page: SearchResultPage, pred_page: SearchResultPage) -> float:
    """|gold urls ∩ pred urls| / |gold urls| after normalization."""
    if not gold_page.urls:
        raise InputError(f"gold page for {gold_page.query!r} has no urls")
    gold = set(gold_page.urls)
    pred = set(pred_page.urls)
    return len(gold & pred) / len(gold)


class FixtureSearchClient:
    """Serves recorded pages keyed by exact query string."""

    def __init__(self, path):
        self.path = Path(path)
        self._pages: dict[str, SearchResultPage] = {}
        with self.path.open("r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    entry = json.loads(line)
                    self._pages[entry["query"]] = SearchResultPage.build(
                        entry["query"], entry["urls"])

    def fetch(self, query: str) -> SearchResultPage:
        if not query:
            raise InputError("query must be non-empty")
        try:
            return self._pages[query]
        except KeyError:
            raise FixtureMissError(query) from None


class LiveSearchClient:
    """Top-10 organic URLs from a serpapi-compatible endpoint, optionally
    recording pages into a fixture file for later replay."""

    def __init__(self, endpoint: str = "https://serpapi.com/search",
                 api_key: Optional[str] = None, record_path=None,
                 min_interval_s: float = 0.0, timeout: float = 30.0,
                 session: Optional[requests.Session] = None):
        self.endpoint = endpoint
        self.api_key = api_key
        self.record_path = Path(record_path) if record_path else None
        self.min_interval_s = min_interval_s
        self.timeout = timeout
        self.session = session or requests.Session()
        self._lock = threading.Lock()
        self._last_request = 0.0

    def _throttle(self):
        with self._lock:
            wait = self.min_interval_s - (time.monotonic() - self._last_request)
            if wait > 0:
                time.sleep(wait)
            self._last_request = time.monotonic()

    def fetch(self, query: str) -> SearchResultPage:
        if not query:
            raise InputError("query must be non-empty")
        params = {"q": query, "num": MAX_URLS}
        if self.api_key:
            params["api_key"] = self.api_key
        last_error = None
        for attempt in range(3):
            self._throttle()
            try:
                resp = self.session.get(self.endpoint, params=params,
                                        timeout=self.timeout)
                resp.raise_for_status()
                body = resp.json()
                break
            except (requests.RequestException, ValueError) as e:
                last_error = e
        else:
            raise TransportError(f"search request failed for {query!r}: {last_error}")
        urls = [r["link"] for r in body.get("organic_results", []) if "link" in r]
        page = SearchResultPage.build(query, urls)
        if self.record_path:
            with self._lock:
                self.record_path.parent.mkdir(parents=True, exist_ok=True)
                with self.record_path.open("a", encoding="utf-8") as f:
                    f.write(canonical_json({"query": query, "urls": list(page.urls)}))
                    f.write("\n")
        return page


@dataclass(frozen=True)
class EvalReport:
    n: int
    embedding_similarity_mean: float
    rouge1_recall_mean: float
    recall_at_10_mean: Optional[float] = None
    recall_at_10_skipped: int = 0

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "embedding_similarity_mean": self.embedding_similarity_mean,
            "rouge1_recall_mean": self.rouge1_recall_mean,
        }
        if self.recall_at_10_mean is not None:
            d["recall_at_10_mean"] = self.recall_at_10_mean
            d["recall_at_10_skipped"] = self.recall_at_10_skipped
        return d

    def render_table(self) -> str:
        """Human-readable table with both raw values and percentages."""
        rows = [
            ("Embedding Similarity", self.embedding_similarity_mean),
            ("Rouge-1 Recall", self.rouge1_recall_mean),
        ]
        if self.recall_at_10_mean is not None:
            rows.append(("Search Results Recall@10", self.recall_at_10_mean))
        lines = [f"n = {self.n}"]
        for name, value in rows:
            lines.append(f"{name:<26} {value:8.4f}  ({value * 100:.1f}%)")
        if self.recall_at_10_mean is not None and self.recall_at_10_skipped:
            lines.append(f"(recall@10 skipped {self.recall_at_10_skipped} records "
                         "with empty gold pages)")
        return "\n".join(lines)


def evaluate(records: Sequence[EvalRecord], embedder, search_client=None,
             breakdown_path=None) -> EvalReport:
    """Score every (gold, predicted) query pair and aggregate means.

    Recall@10 is only computed when a search client is supplied; records
    whose gold page is empty are skipped there and tallied separately.
    """
    records = list(records)
    if not records:
        raise InputError("evaluate() requires at least one record")

    rows = []
    emb_total = 0.0
    rouge_total = 0.0
    r10_total = 0.0
    r10_count = 0
    r10_skipped = 0
    for record in records:
        vecs = embedder.embed([record.gold_query, record.predicted_query])
        emb = cosine(vecs[0], vecs[1])
        rouge = rouge1_recall(record.gold_query, record.predicted_query)
        row = {
            "id": record.id,
            "gold_query": record.gold_query,
            "predicted_query": record.predicted_query,
            "embedding_similarity": emb,
            "rouge1_recall": rouge,
        }
        if search_client is not None:
            gold_page = search_client.fetch(record.gold_query)
            pred_page = search_client.fetch(record.predicted_query)
            if gold_page.urls:
                r10 = recall_at_10(gold_page, pred_page)
                row["recall_at_10"] = r10
                r10_total += r10
                r10_count += 1
            else:
                r10_skipped += 1
        emb_total += emb
        rouge_total += rouge
        rows.append(row)

    if breakdown_path is not None:
        breakdown_path = Path(breakdown_path)
        breakdown_path.parent.mkdir(parents=True, exist_ok=True)
        with breakdown_path.open("w", encoding="utf-8", newline="\n") as f:
            for row in rows:
                f.write(canonical_json(row) + "\n")

    n = len(records)
    r10_mean = None
    if search_client is not None and r10_count:
        r10_mean = r10_total / r10_count
    return EvalReport(
        n=n,
        embedding_similarity_mean=emb_total / n,
        rouge1_recall_mean=rouge_total / n,
        recall_at_10_mean=r10_mean,
        recall_at_10_skipped=r10_skipped,
    )


@dataclass(frozen=True)
class FactualityRecord:
    question: str
    response: str
    document: str
    nli: float

    def __post_init__(self):
        if not 0.0 <= self.nli <= 1.0:
            raise InputError("nli score out of [0,1]")

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "response": self.response,
            "document": self.document,
            "nli": self.nli,
        }


def score_response_factuality(question: str, response: str, document: str,
                              nli_provider) -> FactualityRecord:
    """Entailment that `document` supports `response` answering `question`."""
    if not question or not response or not document:
        raise InputError("question, response and document must all be non-empty")
    score = nli_provider.nli(
        document, FACTUALITY_HYPOTHESIS.format(question=question, response=response))
    return FactualityRecord(question=question, response=response,
                            document=document, nli=score)
