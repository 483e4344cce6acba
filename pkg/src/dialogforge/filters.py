"""The filter cascade over generated samples.

Four checks, always all scored even after one fails so a single pass
supports ablations and audits:

  intent      — cosine between source question and reversed question
                embeddings must be >= t_query (boundary kept)
  answer_leak — unigram recall of the answer inside the dialog text must
                be <= t_answer
  last_turn   — the final user turn must not be a near-duplicate of the
                source question (similarity <= t_last_turn keeps)
  nli         — optional: entailment that the dialog asks the question
                must be >= t_nli
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError
from .llm import render_turns
from .records import FilterScores, FilterVerdict, GeneratedSample
from .scoring import cosine
from .textmetrics import contains_overlap

NLI_INTENT_HYPOTHESIS = "The dialog asks the question {q}"


@dataclass(frozen=True)
class FilterConfig:
    t_query: float = 0.999
    t_answer: float = 0.6
    t_last_turn: float = 0.8
    nli_enabled: bool = False
    t_nli: float = 0.82

    def __post_init__(self):
        for name in ("t_query", "t_answer", "t_last_turn", "t_nli"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InputError(f"{name} must be in [0,1], got {value}")

    def to_dict(self) -> dict:
        return {
            "t_query": self.t_query,
            "t_answer": self.t_answer,
            "t_last_turn": self.t_last_turn,
            "nli_enabled": self.nli_enabled,
            "t_nli": self.t_nli,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterConfig":
        return cls(**{k: d[k] for k in
                      ("t_query", "t_answer", "t_last_turn", "nli_enabled", "t_nli")
                      if k in d})


def score_sample(sample: GeneratedSample, embedder, nli_provider=None,
                 cfg: FilterConfig | None = None) -> FilterScores:
    """Compute all filter scores for one sample."""
    cfg = cfg or FilterConfig()
    if not sample.reversed_question:
        raise InputError(f"sample {sample.id!r} has no reversed question")
    if not sample.dialog.ends_with_user():
        raise InputError(f"sample {sample.id!r} dialog does not end with a user turn")

    q = sample.source_question
    vecs = embedder.embed([q, sample.reversed_question, sample.dialog.last_user_text()])
    intent = cosine(vecs[0], vecs[1])
    last_turn = cosine(vecs[0], vecs[2])
    leak = contains_overlap(sample.dialog.text(), sample.answer)

    nli_intent = None
    if cfg.nli_enabled:
        if nli_provider is None:
            nli_provider = embedder
        nli_intent = nli_provider.nli(
            render_turns(sample.dialog), NLI_INTENT_HYPOTHESIS.format(q=q))

    return FilterScores(
        intent_similarity=intent,
        answer_leak=leak,
        last_turn_similarity=last_turn,
        nli_intent=nli_intent,
    )


def apply_filters(scores: FilterScores, cfg: FilterConfig) -> FilterVerdict:
    """Turn scores into a verdict. Boundary semantics: a score exactly at
    its threshold is always kept."""
    failed = []
    if scores.intent_similarity < cfg.t_query:
        failed.append("intent")
    if scores.answer_leak > cfg.t_answer:
        failed.append("answer_leak")
    if scores.last_turn_similarity > cfg.t_last_turn:
        failed.append("last_turn")
    if cfg.nli_enabled and scores.nli_intent is not None and scores.nli_intent < cfg.t_nli:
        failed.append("nli")
    return FilterVerdict(retained=not failed, failed_filters=tuple(failed))


def sweep_thresholds(scored: list[FilterScores], thresholds: list[float]
                     ) -> list[tuple[float, float]]:
    """For each threshold, the proportion of samples whose intent
    similarity falls below it. Non-decreasing in the threshold."""
    if not scored:
        raise InputError("cannot sweep thresholds over an empty corpus")
    if list(thresholds) != sorted(thresholds):
        raise InputError("thresholds must be sorted ascending")
    n = len(scored)
    return [
        (t, sum(1 for s in scored if s.intent_similarity < t) / n)
        for t in thresholds
    ]


def filter_report(samples, cfg: FilterConfig) -> dict:
    """Aggregate verdict counts; always derivable from the samples file."""
    total = 0
    retained = 0
    failed_by_filter = {name: 0 for name in
                        ("intent", "answer_leak", "last_turn", "nli", "parse_error")}
    for sample in samples:
        total += 1
        if sample.verdict.retained:
            retained += 1
        for name in sample.verdict.failed_filters:
            failed_by_filter[name] += 1
    return {
        "config": cfg.to_dict(),
        "total": total,
        "retained": retained,
        "failed_by_filter": failed_by_filter,
    }
