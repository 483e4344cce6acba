"""dialogforge: turn QA datasets into information-seeking dialog datasets
via few-shot generation, reverse-query consistency filtering, and
answer-leak filtering, plus a query-generation evaluation harness."""

from .filters import FilterConfig, apply_filters, score_sample, sweep_thresholds
from .llm import LmBackendConfig, PromptSet, parse_dialog
from .pipeline import PipelineConfig, regenerate_answers, resume, run_pipeline
from .records import (Dialog, DialogTurn, EvalRecord, FilterScores,
                      FilterVerdict, GeneratedSample, QaRecord, read_jsonl,
                      write_jsonl)
from .scoring import BuiltinHashEmbedder, RemoteScoringClient, ScoreProviderConfig, cosine
from .textmetrics import contains_overlap, rouge1_recall, tokenize

__version__ = "0.1.0"

__all__ = [
    "Dialog", "DialogTurn", "EvalRecord", "FilterConfig", "FilterScores",
    "FilterVerdict", "GeneratedSample", "LmBackendConfig", "PipelineConfig",
    "PromptSet", "QaRecord", "BuiltinHashEmbedder", "RemoteScoringClient",
    "ScoreProviderConfig", "apply_filters", "contains_overlap", "cosine",
    "parse_dialog", "read_jsonl", "regenerate_answers", "resume",
    "rouge1_recall", "run_pipeline", "score_sample", "sweep_thresholds",
    "tokenize", "write_jsonl",
]
