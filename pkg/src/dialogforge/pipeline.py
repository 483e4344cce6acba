"""End-to-end orchestration: question -> dialog -> reversed question ->
scores -> verdict, resumable and deterministic.

All samples (retained and filtered) are emitted in input order with full
scores, so downstream ablations and audits work from a single run; a
retained-only export recovers the plain dataset.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .errors import (CheckpointMismatchError, DialogParseError, InputError,
                     RecordError, TransportError)
from .filters import FilterConfig, apply_filters, filter_report, score_sample
from .llm import (FORWARD_MAX_TOKENS, REVERSE_MAX_TOKENS, LmBackendConfig,
                  LmRequest, PromptSet, build_backend, generate_response,
                  parse_dialog, render_forward_prompt, render_reverse_prompt)
from .records import (Dialog, FilterScores, FilterVerdict, GeneratedSample,
                      QaRecord, canonical_json, serialize_record)
from .scoring import ScoreProviderConfig, build_provider

RETRY_ATTEMPTS = 3
RETRY_BACKOFF_S = 0.5


@dataclass(frozen=True)
class PipelineConfig:
    prompt_set: PromptSet
    lm: LmBackendConfig = LmBackendConfig()
    scorers: ScoreProviderConfig = ScoreProviderConfig()
    filters: FilterConfig = FilterConfig()
    forward_temperature: float = 0.6
    concurrency: int = 1
    checkpoint_path: Optional[str] = None

    def __post_init__(self):
        if self.concurrency < 1:
            raise InputError("concurrency must be >= 1")


def pipeline_fingerprint(cfg: PipelineConfig) -> str:
    """Hash of everything that would silently change outputs mid-run."""
    h = hashlib.sha256()
    h.update(cfg.prompt_set.fingerprint_bytes())
    h.update(canonical_json(cfg.filters.to_dict()).encode("utf-8"))
    h.update(cfg.lm.kind.encode("utf-8"))
    return h.hexdigest()


def _with_retries(fn, attempts: int = RETRY_ATTEMPTS):
    for attempt in range(attempts):
        try:
            return fn()
        except TransportError:
            if attempt == attempts - 1:
                raise
            time.sleep(RETRY_BACKOFF_S * (attempt + 1))


def _parse_error_sample(record: QaRecord) -> GeneratedSample:
    return GeneratedSample(
        id=record.id,
        source_question=record.question,
        answer=record.answer,
        dialog=Dialog(()),
        reversed_question="",
        scores=FilterScores(),
        verdict=FilterVerdict(retained=False, failed_filters=("parse_error",)),
    )


def _first_line(text: str) -> str:
    for line in text.splitlines():
        if line.strip():
            return line.strip()
    return ""


def _process_record(record: QaRecord, cfg: PipelineConfig, backend, embedder,
                    nli_provider) -> GeneratedSample:
    forward_req = LmRequest(
        prompt=render_forward_prompt(cfg.prompt_set, record.question),
        temperature=cfg.forward_temperature,
        max_tokens=FORWARD_MAX_TOKENS,
        stop=("\nQuestion:",),
    )
    completion = _with_retries(lambda: backend.complete(forward_req))
    try:
        dialog = parse_dialog(completion)
    except DialogParseError:
        return _parse_error_sample(record)

    reverse_req = LmRequest(
        prompt=render_reverse_prompt(cfg.prompt_set, dialog),
        temperature=0.0,
        max_tokens=REVERSE_MAX_TOKENS,
        stop=("\n",),
    )
    reversed_question = _first_line(
        _with_retries(lambda: backend.complete(reverse_req)))
    if not reversed_question:
        return _parse_error_sample(record)

    sample = GeneratedSample(
        id=record.id,
        source_question=record.question,
        answer=record.answer,
        dialog=dialog,
        reversed_question=reversed_question,
        scores=FilterScores(),
        verdict=FilterVerdict(retained=True),
    )
    scores = _with_retries(
        lambda: score_sample(sample, embedder, nli_provider, cfg.filters))
    verdict = apply_filters(scores, cfg.filters)
    return dataclasses.replace(sample, scores=scores, verdict=verdict)


def _check_unique_ids(qa: Sequence[QaRecord]):
    seen = set()
    for record in qa:
        if record.id in seen:
            raise RecordError(f"duplicate QaRecord id {record.id!r}")
        seen.add(record.id)


def _write_checkpoint(path, fingerprint: str, done_ids: list):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(canonical_json(
        {"fingerprint": fingerprint, "done_ids": done_ids}) + "\n",
        encoding="utf-8")
    tmp.replace(path)


def run_pipeline(qa: Sequence[QaRecord], cfg: PipelineConfig,
            out_path=None, _done: Optional[list] = None):
    """Run the generation pipeline over `qa`.

    Returns (samples, report). Samples are emitted in input order at any
    concurrency level; when `out_path` is given they are flushed to disk
    as they complete, and a checkpoint (when configured) tracks progress.
    """
    qa = list(qa)
    _check_unique_ids(qa)
    done = list(_done or [])
    fingerprint = pipeline_fingerprint(cfg)

    backend = build_backend(cfg.lm)
    embedder = build_provider(cfg.scorers)
    nli_provider = embedder if cfg.filters.nli_enabled else None

    pending = qa[len(done):]
    samples = list(done)
    done_ids = [s.id for s in done]

    out_file = None
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        mode = "a" if done else "w"
        out_file = out_path.open(mode, encoding="utf-8", newline="\n")

    try:
        def work(record):
            return _process_record(record, cfg, backend, embedder, nli_provider)

        if cfg.concurrency == 1 or len(pending) <= 1:
            results = map(work, pending)
            for sample in results:
                samples.append(sample)
                done_ids.append(sample.id)
                if out_file is not None:
                    out_file.write(serialize_record(sample) + "\n")
                    out_file.flush()
                if cfg.checkpoint_path:
                    _write_checkpoint(cfg.checkpoint_path, fingerprint, done_ids)
        else:
            with ThreadPoolExecutor(max_workers=cfg.concurrency) as executor:
                for sample in executor.map(work, pending):
                    samples.append(sample)
                    done_ids.append(sample.id)
                    if out_file is not None:
                        out_file.write(serialize_record(sample) + "\n")
                        out_file.flush()
                    if cfg.checkpoint_path:
                        _write_checkpoint(cfg.checkpoint_path, fingerprint, done_ids)
    finally:
        if out_file is not None:
            out_file.close()

    report = filter_report(samples, cfg.filters)
    return samples, report


def resume(checkpoint_path, cfg: PipelineConfig, qa: Sequence[QaRecord], out_path):
    """Continue an interrupted run. The final output is identical to an
    uninterrupted run; resuming a finished run is a no-op."""
    checkpoint_path = Path(checkpoint_path)
    checkpoint = json.loads(checkpoint_path.read_text(encoding="utf-8"))
    fingerprint = pipeline_fingerprint(cfg)
    if checkpoint.get("fingerprint") != fingerprint:
        raise CheckpointMismatchError(
            "checkpoint was produced under a different configuration "
            f"(checkpoint {checkpoint.get('fingerprint')}, current {fingerprint}); "
            "refusing to resume")

    qa = list(qa)
    done_ids = checkpoint.get("done_ids", [])
    expected = [r.id for r in qa[:len(done_ids)]]
    if done_ids != expected:
        raise CheckpointMismatchError(
            "checkpoint done_ids are not a prefix of the input dataset")

    from .records import read_jsonl
    existing = list(read_jsonl(out_path, GeneratedSample)) if Path(out_path).exists() else []
    if [s.id for s in existing] != done_ids:
        raise CheckpointMismatchError(
            "samples file does not match the checkpoint's done_ids")

    cfg = dataclasses.replace(cfg, checkpoint_path=str(checkpoint_path))
    return run_pipeline(qa, cfg, out_path=out_path, _done=existing)


def regenerate_answers(samples: Sequence[GeneratedSample], cfg: PipelineConfig
                       ) -> list[GeneratedSample]:
    """Replace every assistant turn with a backend-generated response,
    producing the semi-auto-generated variant: questions preserved,
    responses regenerated in sequence over the growing prefix."""
    backend = build_backend(cfg.lm)
    out = []
    for sample in samples:
        turns = list(sample.dialog.turns)
        for i, turn in enumerate(turns):
            if turn.role != "assistant":
                continue
            prefix = Dialog(tuple(turns[:i]))
            if not prefix.ends_with_user():
                continue
            response = _with_retries(
                lambda p=prefix: generate_response(backend, cfg.prompt_set, p))
            if response:
                turns[i] = dataclasses.replace(turn, text=response)
        out.append(dataclasses.replace(sample, dialog=Dialog(tuple(turns))))
    return out
