import json

import pytest

from dialogforge.llm import (FORWARD_MAX_TOKENS, REVERSE_MAX_TOKENS, LmRequest,
                             PromptSet, lm_request_key, parse_dialog,
                             render_forward_prompt, render_reverse_prompt)
from dialogforge.records import Dialog, DialogTurn, QaRecord, canonical_json


def turn(role, text):
    return DialogTurn(role=role, text=text)


def dialog(*pairs):
    return Dialog(tuple(turn(r, t) for r, t in pairs))


@pytest.fixture
def prompt_set():
    return PromptSet(
        instruction_forward=(
            "Write a dialog between an assistant and a user that indirectly "
            "asks the question you received."),
        instruction_reverse=(
            "Given a dialog that asks an indirect question, extract the "
            "concrete question."),
        examples=(
            (
                "who directed the movie inception",
                dialog(
                    ("user", "i watched a great heist movie about dreams yesterday"),
                    ("assistant", "That sounds like Inception, a 2010 science fiction film."),
                    ("user", "right, who directed it"),
                ),
            ),
            (
                "what is the tallest mountain in africa",
                dialog(
                    ("user", "i am planning a hiking trip to africa"),
                    ("assistant", "Africa has several famous peaks worth climbing."),
                    ("user", "which one is the tallest"),
                ),
            ),
        ),
    )


def pipeline_forward_request(prompt_set, question, temperature=0.6):
    return LmRequest(prompt=render_forward_prompt(prompt_set, question),
                     temperature=temperature, max_tokens=FORWARD_MAX_TOKENS,
                     stop=("\nQuestion:",))


def pipeline_reverse_request(prompt_set, parsed_dialog):
    return LmRequest(prompt=render_reverse_prompt(prompt_set, parsed_dialog),
                     temperature=0.0, max_tokens=REVERSE_MAX_TOKENS,
                     stop=("\n",))


def build_replay_file(path, prompt_set, script, forward_temperature=0.6):
    """Write a replay fixture covering the pipeline's requests.

    `script` maps question -> (forward_completion, reversed_question).
    """
    entries = []
    for question, (forward_completion, reversed_question) in script.items():
        freq = pipeline_forward_request(prompt_set, question, forward_temperature)
        entries.append((freq, forward_completion))
        try:
            parsed = parse_dialog(forward_completion)
        except Exception:
            continue
        rreq = pipeline_reverse_request(prompt_set, parsed)
        entries.append((rreq, reversed_question))
    with open(path, "w", encoding="utf-8") as f:
        for req, completion in entries:
            f.write(canonical_json({
                "key": lm_request_key(req),
                "request": req.to_dict(),
                "completion": completion,
            }) + "\n")
    return path


def qa_records(n, answer=True):
    return [
        QaRecord(id=f"q{i:03d}",
                 question=f"who won the championship in season {i}",
                 answer=f"the falcons squad {i}" if answer else "")
        for i in range(n)
    ]


def write_qa_file(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    return path
