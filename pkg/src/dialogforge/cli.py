"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
Every successful run writes a manifest next to its primary output with
the effective config and input/output hashes, so reruns can be verified
byte-for-byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from .errors import DialogforgeError, FixtureMissError
from .evaluation import FixtureSearchClient, evaluate, score_response_factuality
from .filters import FilterConfig, apply_filters, filter_report, score_sample, sweep_thresholds
from .llm import LmBackendConfig, PromptSet
from .pipeline import PipelineConfig, regenerate_answers, resume, run_pipeline
from .records import (EvalRecord, GeneratedSample, QaRecord, canonical_json,
                      read_jsonl, write_jsonl)
from .scoring import ScoreProviderConfig, build_provider


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path, command: str, config: dict, inputs, outputs,
                    started: str, finished: str):
    manifest = {
        "command": command,
        "config_snapshot": canonical_json(config),
        "input_hashes": {str(p): _sha256_file(p) for p in inputs if Path(p).exists()},
        "output_hashes": {str(p): _sha256_file(p) for p in outputs if Path(p).exists()},
        "started": started,
        "finished": finished,
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _backend_config(backend, endpoint, replay, record) -> LmBackendConfig:
    if backend == "http" and not endpoint:
        raise click.UsageError("--backend http requires --endpoint")
    if backend == "replay" and not replay:
        raise click.UsageError("--backend replay requires --replay")
    return LmBackendConfig(kind=backend, endpoint=endpoint,
                           replay_path=replay, record_path=record)


def _scorer_config(scorer, scorer_endpoint, cache) -> ScoreProviderConfig:
    if scorer == "remote" and not scorer_endpoint:
        raise click.UsageError("--scorer remote requires --scorer-endpoint")
    return ScoreProviderConfig(kind="builtin_hash" if scorer == "builtin" else "remote",
                               endpoint=scorer_endpoint, cache_path=cache)


def _filter_config(t_query, t_answer, t_last_turn, nli, t_nli) -> FilterConfig:
    return FilterConfig(t_query=t_query, t_answer=t_answer,
                        t_last_turn=t_last_turn, nli_enabled=nli, t_nli=t_nli)


filter_options = [
    click.option("--t-query", type=float, default=0.999, show_default=True,
                 help="Minimum source/reversed query similarity to keep."),
    click.option("--t-answer", type=float, default=0.6, show_default=True,
                 help="Maximum answer-token recall inside the dialog."),
    click.option("--t-last-turn", type=float, default=0.8, show_default=True,
                 help="Maximum similarity between last user turn and the question."),
    click.option("--nli/--no-nli", default=False, show_default=True,
                 help="Enable the NLI intent filter (needs a remote scorer)."),
    click.option("--t-nli", type=float, default=0.82, show_default=True),
]

scorer_options = [
    click.option("--scorer", type=click.Choice(["builtin", "remote"]),
                 default="builtin", show_default=True),
    click.option("--scorer-endpoint", default=None,
                 help="Base URL of a scoring service (POST /embed, /nli)."),
    click.option("--cache", default=None, help="Score cache file (JSONL, append-only)."),
]


def _add_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@click.group()
def main():
    """Generate information-seeking dialogs from questions, filter them,
    and evaluate query-generation quality."""


@main.command()
@click.option("--qa", "qa_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--prompts", "prompts_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--backend", required=True, type=click.Choice(["echo", "replay", "http"]))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--endpoint", default=None)
@click.option("--replay", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--record", default=None, type=click.Path(dir_okay=False))
@_add_options(scorer_options)
@_add_options(filter_options)
@click.option("--forward-temperature", type=float, default=0.6, show_default=True)
@click.option("--concurrency", type=int, default=1, show_default=True)
@click.option("--checkpoint", "checkpoint_path", default=None, type=click.Path(dir_okay=False))
@click.option("--resume", "do_resume", is_flag=True, default=False,
              help="Continue from an existing checkpoint.")
@click.option("--seed", type=int, default=None,
              help="Reserved; the pipeline has no client-side randomness.")
def generate(qa_path, prompts_path, backend, out_path, endpoint, replay, record,
             scorer, scorer_endpoint, cache, t_query, t_answer, t_last_turn,
             nli, t_nli, forward_temperature, concurrency, checkpoint_path,
             do_resume, seed):
    """Run the question-to-dialog pipeline and write a scored samples file."""
    started = _now()
    cfg = PipelineConfig(
        prompt_set=PromptSet.load(prompts_path),
        lm=_backend_config(backend, endpoint, replay, record),
        scorers=_scorer_config(scorer, scorer_endpoint, cache),
        filters=_filter_config(t_query, t_answer, t_last_turn, nli, t_nli),
        forward_temperature=forward_temperature,
        concurrency=concurrency,
        checkpoint_path=checkpoint_path,
    )
    if do_resume and not checkpoint_path:
        raise click.UsageError("--resume requires --checkpoint")
    try:
        qa = list(read_jsonl(qa_path, QaRecord))
        if do_resume and Path(checkpoint_path).exists():
            samples, report = resume(checkpoint_path, cfg, qa, out_path)
        else:
            samples, report = run_pipeline(qa, cfg, out_path=out_path)
    except DialogforgeError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)

    report_path = Path(str(out_path) + ".report.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")
    config_snapshot = {
        "backend": dataclasses.asdict(cfg.lm),
        "scorers": dataclasses.asdict(cfg.scorers),
        "filters": cfg.filters.to_dict(),
        "forward_temperature": cfg.forward_temperature,
        "concurrency": cfg.concurrency,
    }
    _write_manifest(out_path, "generate", config_snapshot,
                    inputs=[qa_path, prompts_path],
                    outputs=[out_path, report_path],
                    started=started, finished=_now())
    click.echo(f"wrote {len(samples)} samples to {out_path} "
               f"({report['retained']} retained)")


@main.command("filter")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@_add_options(scorer_options)
@_add_options(filter_options)
def filter_cmd(in_path, out_path, scorer, scorer_endpoint, cache,
               t_query, t_answer, t_last_turn, nli, t_nli):
    """Re-score and re-verdict an existing samples file."""
    started = _now()
    fcfg = _filter_config(t_query, t_answer, t_last_turn, nli, t_nli)
    try:
        embedder = build_provider(_scorer_config(scorer, scorer_endpoint, cache))
        out = []
        for sample in read_jsonl(in_path, GeneratedSample):
            if "parse_error" in sample.verdict.failed_filters:
                out.append(sample)
                continue
            scores = score_sample(sample, embedder, cfg=fcfg)
            verdict = apply_filters(scores, fcfg)
            out.append(dataclasses.replace(sample, scores=scores, verdict=verdict))
        write_jsonl(out_path, out)
        report = filter_report(out, fcfg)
    except DialogforgeError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    report_path = Path(str(out_path) + ".report.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")
    _write_manifest(out_path, "filter", fcfg.to_dict(),
                    inputs=[in_path], outputs=[out_path, report_path],
                    started=started, finished=_now())
    click.echo(f"re-scored {report['total']} samples, {report['retained']} retained")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--thresholds", default="0,0.25,0.5,0.75,0.8,0.9,0.95,0.99,0.999",
              show_default=True, help="Comma-separated ascending thresholds.")
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False))
def ablate(in_path, thresholds, out_path):
    """Intent-similarity threshold sweep over a scored samples file."""
    started = _now()
    try:
        grid = [float(t) for t in thresholds.split(",") if t.strip() != ""]
    except ValueError:
        raise click.UsageError(f"invalid --thresholds value: {thresholds!r}")
    try:
        scored = [s.scores for s in read_jsonl(in_path, GeneratedSample)
                  if "parse_error" not in s.verdict.failed_filters]
        rows = sweep_thresholds(scored, grid)
    except DialogforgeError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    click.echo(f"{'threshold':>10}  {'filtered':>9}")
    for t, proportion in rows:
        click.echo(f"{t:>10g}  {proportion:>8.1%}")
    if out_path:
        payload = {"thresholds": [{"threshold": t, "filtering_proportion": p}
                                  for t, p in rows]}
        Path(out_path).write_text(json.dumps(payload, indent=2) + "\n",
                                  encoding="utf-8")
        _write_manifest(out_path, "ablate", {"thresholds": grid},
                        inputs=[in_path], outputs=[out_path],
                        started=started, finished=_now())


@main.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--search-fixtures", default=None, type=click.Path(exists=True, dir_okay=False))
@_add_options(scorer_options)
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False))
def eval_cmd(pred_path, search_fixtures, scorer, scorer_endpoint, cache, out_path):
    """Score predicted queries against gold queries."""
    started = _now()
    try:
        records = list(read_jsonl(pred_path, EvalRecord))
        embedder = build_provider(_scorer_config(scorer, scorer_endpoint, cache))
        search_client = None
        if search_fixtures:
            search_client = FixtureSearchClient(search_fixtures)
            missing = sorted({
                q for r in records for q in (r.gold_query, r.predicted_query)
                if q not in search_client._pages})
            if missing:
                click.echo("error: search fixtures missing queries:", err=True)
                for q in missing:
                    click.echo(f"  {q}", err=True)
                sys.exit(1)
        breakdown_path = Path(str(out_path or pred_path) + ".breakdown.jsonl")
        report = evaluate(records, embedder, search_client=search_client,
                          breakdown_path=breakdown_path)
    except DialogforgeError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    click.echo(report.render_table())
    if out_path:
        Path(out_path).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
        _write_manifest(out_path, "eval", {"search_fixtures": search_fixtures},
                        inputs=[pred_path],
                        outputs=[out_path, breakdown_path],
                        started=started, finished=_now())


@main.command()
@click.option("--dialogs", "dialogs_a", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Samples file (response set A).")
@click.option("--dialogs-b", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Second samples file to compare against (response set B).")
@click.option("--docs", "docs_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help='JSONL of {"id": ..., "document": ...} grounding documents.')
@click.option("--nli-endpoint", required=True, help="Scoring service base URL.")
@click.option("--cache", default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def factuality(dialogs_a, dialogs_b, docs_path, nli_endpoint, cache, out_path):
    """Score response factuality via NLI against grounding documents."""
    started = _now()
    try:
        provider = build_provider(ScoreProviderConfig(
            kind="remote", endpoint=nli_endpoint, cache_path=cache))
        docs = {}
        with open(docs_path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    entry = json.loads(line)
                    docs[entry["id"]] = entry["document"]

        def score_set(path):
            scored = []
            for sample in read_jsonl(path, GeneratedSample):
                document = docs.get(sample.id)
                if not document:
                    continue
                turns = sample.dialog.turns
                for i, turn in enumerate(turns):
                    if turn.role != "assistant" or i == 0 or turns[i - 1].role != "user":
                        continue
                    scored.append(score_response_factuality(
                        turns[i - 1].text, turn.text, document, provider))
            return scored

        set_a = score_set(dialogs_a)
        set_b = score_set(dialogs_b) if dialogs_b else None
    except DialogforgeError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)

    with open(out_path, "w", encoding="utf-8", newline="\n") as f:
        for label, scored in (("a", set_a), ("b", set_b or [])):
            for record in scored:
                row = dict(record.to_dict(), set=label)
                f.write(canonical_json(row) + "\n")

    def mean(xs):
        return sum(xs) / len(xs) if xs else 0.0

    click.echo(f"{'set':>4}  {'responses':>9}  {'mean NLI':>9}")
    click.echo(f"{'A':>4}  {len(set_a):>9}  {mean([r.nli for r in set_a]):>8.1%}")
    if set_b is not None:
        click.echo(f"{'B':>4}  {len(set_b):>9}  {mean([r.nli for r in set_b]):>8.1%}")
    _write_manifest(out_path, "factuality", {"nli_endpoint": nli_endpoint},
                    inputs=[p for p in (dialogs_a, dialogs_b, docs_path) if p],
                    outputs=[out_path], started=started, finished=_now())


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--retained-only", is_flag=True, default=False,
              help="Drop filtered samples, keeping only the final dataset.")
def export(in_path, out_path, retained_only):
    """Copy a samples file, optionally keeping only retained samples."""
    started = _now()
    try:
        samples = read_jsonl(in_path, GeneratedSample)
        if retained_only:
            samples = (s for s in samples if s.verdict.retained)
        count = write_jsonl(out_path, samples)
    except DialogforgeError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    _write_manifest(out_path, "export", {"retained_only": retained_only},
                    inputs=[in_path], outputs=[out_path],
                    started=started, finished=_now())
    click.echo(f"wrote {count} samples to {out_path}")


if __name__ == "__main__":
    main()
