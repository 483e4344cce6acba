"""Few-shot prompt construction and language-model backends.

Prompt templates are fixed byte-exact; domain adaptation happens by
swapping the few-shot examples in the prompt-set file, never by editing
templates. Backends come in three kinds: `http` (a live completion
endpoint), `replay` (recorded completions keyed by request hash, for
deterministic offline runs), and `echo` (a synthetic backend that turns
the pipeline into a fixpoint, for tests).
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import requests

from .errors import (DialogParseError, InputError, RecordError, ReplayMissError,
                     TransportError)
from .records import ASSISTANT, USER, Dialog, DialogTurn, canonical_json

FORWARD_MAX_TOKENS = 512
REVERSE_MAX_TOKENS = 64
RESPONSE_MAX_TOKENS = 128

RESPONSE_INSTRUCTION = (
    "Continue the dialog with the assistant's next response."
)

_ROLE_LABEL = {USER: "User", ASSISTANT: "Assistant"}


@dataclass(frozen=True)
class PromptSet:
    """Instructions plus few-shot (question, dialog) example pairs. The
    reverse direction reuses the same examples with the fields swapped."""

    instruction_forward: str
    instruction_reverse: str
    examples: tuple  # of (question, Dialog)

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        if not self.examples:
            raise RecordError("prompt set needs at least one example")
        for question, dialog in self.examples:
            if not question:
                raise RecordError("prompt-set example question must be non-empty")
            if not dialog.ends_with_user():
                raise RecordError(
                    f"prompt-set example for {question!r} must end with a user turn")

    def to_dict(self) -> dict:
        return {
            "instruction_forward": self.instruction_forward,
            "instruction_reverse": self.instruction_reverse,
            "examples": [
                {"question": q, "dialog": d.to_list()} for q, d in self.examples
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PromptSet":
        return cls(
            instruction_forward=d["instruction_forward"],
            instruction_reverse=d["instruction_reverse"],
            examples=tuple(
                (ex["question"], Dialog.from_list(ex["dialog"]))
                for ex in d["examples"]
            ),
        )

    @classmethod
    def load(cls, path) -> "PromptSet":
        with Path(path).open("r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(canonical_json(self.to_dict()) + "\n", encoding="utf-8")

    def fingerprint_bytes(self) -> bytes:
        return canonical_json(self.to_dict()).encode("utf-8")


def render_turns(dialog: Dialog) -> str:
    """One line per turn, 'User: '/'Assistant: ' prefixed."""
    return "\n".join(f"{_ROLE_LABEL[t.role]}: {t.text}" for t in dialog.turns)


def render_forward_prompt(ps: PromptSet, question: str) -> str:
    if not question:
        raise InputError("question must be non-empty")
    parts = [ps.instruction_forward]
    for q, dialog in ps.examples:
        parts.append(f"Question: {q}\nDialog:\n{render_turns(dialog)}")
    parts.append(f"Question: {question}\nDialog:")
    return "\n\n".join(parts)


def render_reverse_prompt(ps: PromptSet, dialog: Dialog) -> str:
    if not dialog.ends_with_user():
        raise InputError("dialog must end with a user turn")
    parts = [ps.instruction_reverse]
    for q, ex_dialog in ps.examples:
        parts.append(f"Dialog:\n{render_turns(ex_dialog)}\nQuestion: {q}")
    parts.append(f"Dialog:\n{render_turns(dialog)}\nQuestion:")
    return "\n\n".join(parts)


def render_response_prompt(ps: PromptSet, dialog: Dialog) -> str:
    if not dialog.ends_with_user():
        raise InputError("dialog must end with a user turn")
    parts = [RESPONSE_INSTRUCTION]
    for _, ex_dialog in ps.examples:
        parts.append(render_turns(ex_dialog))
    parts.append(f"{render_turns(dialog)}\nAssistant:")
    return "\n\n".join(parts)


_TURN_RE = re.compile(r"^\s*(user|assistant)\s*:\s*(.*)$", re.IGNORECASE)
_STOP_RE = re.compile(r"^\s*question\s*:", re.IGNORECASE)


def parse_dialog(completion: str) -> Dialog:
    """Parse a 'User:'/'Assistant:'-prefixed completion into a Dialog.

    Continuation lines are joined to the current turn with single spaces;
    parsing stops at the first 'Question:' line.
    """
    turns: list[tuple[str, list[str]]] = []
    for line in completion.splitlines():
        if _STOP_RE.match(line):
            break
        m = _TURN_RE.match(line)
        if m:
            turns.append((m.group(1).lower(), [m.group(2).strip()]))
        elif turns and line.strip():
            turns[-1][1].append(line.strip())
    parsed = [
        DialogTurn(role=role, text=" ".join(p for p in pieces if p))
        for role, pieces in turns
        if any(p for p in pieces)
    ]
    if not parsed:
        raise DialogParseError("no parsable turns in completion", completion)
    if parsed[-1].role != USER:
        raise DialogParseError("final turn is not a user turn", completion)
    return Dialog(tuple(parsed))


@dataclass(frozen=True)
class LmRequest:
    prompt: str
    temperature: float = 0.0
    max_tokens: int = FORWARD_MAX_TOKENS
    stop: Optional[tuple] = None

    def __post_init__(self):
        if not self.prompt:
            raise InputError("prompt must be non-empty")
        if self.temperature < 0:
            raise InputError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise InputError("max_tokens must be positive")
        if self.stop is not None:
            object.__setattr__(self, "stop", tuple(self.stop))

    def to_dict(self) -> dict:
        return {
            "prompt": self.prompt,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "stop": list(self.stop) if self.stop else None,
        }


def lm_request_key(req: LmRequest) -> str:
    return hashlib.sha256(canonical_json(req.to_dict()).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LmBackendConfig:
    kind: str = "echo"  # http | replay | echo
    endpoint: Optional[str] = None
    replay_path: Optional[str] = None
    record_path: Optional[str] = None
    timeout: float = 60.0
    token_env: str = "LM_API_TOKEN"

    def __post_init__(self):
        if self.kind not in ("http", "replay", "echo"):
            raise InputError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise InputError("http backend requires an endpoint")
        if self.kind == "replay" and not self.replay_path:
            raise InputError("replay backend requires a replay_path")


_LAST_QUESTION_RE = re.compile(r"^Question: (.*)$", re.MULTILINE)
_LAST_USER_RE = re.compile(r"^User: (.*)$", re.MULTILINE)


class EchoBackend:
    """Deterministic synthetic completions derived from the prompt's final
    block. Forward prompts yield a short dialog whose last user turn is the
    question verbatim, so the reverse pass recovers it exactly and the
    pipeline becomes a fixpoint."""

    def complete(self, req: LmRequest) -> str:
        prompt = req.prompt
        if prompt.endswith("Dialog:"):
            matches = _LAST_QUESTION_RE.findall(prompt)
            if not matches:
                raise InputError("forward prompt carries no 'Question:' line")
            question = matches[-1]
            return (
                "User: I could use some help finding an answer.\n"
                "Assistant: Of course, what would you like to know?\n"
                f"User: {question}"
            )
        if prompt.endswith("Question:"):
            matches = _LAST_USER_RE.findall(prompt)
            if not matches:
                raise InputError("reverse prompt carries no 'User:' line")
            return matches[-1]
        if prompt.endswith("Assistant:"):
            matches = _LAST_USER_RE.findall(prompt)
            if not matches:
                raise InputError("response prompt carries no 'User:' line")
            return f"Here is what I found about that: {matches[-1]}"
        raise InputError("echo backend cannot interpret this prompt shape")


class ReplayBackend:
    """Serves completions recorded by a previous run, keyed by request hash."""

    def __init__(self, replay_path):
        self.replay_path = Path(replay_path)
        self._completions: dict[str, str] = {}
        with self.replay_path.open("r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    entry = json.loads(line)
                    self._completions[entry["key"]] = entry["completion"]

    def complete(self, req: LmRequest) -> str:
        key = lm_request_key(req)
        try:
            return self._completions[key]
        except KeyError:
            raise ReplayMissError(key) from None


class HttpBackend:
    """POSTs {"prompt","temperature","max_tokens","stop"} and expects
    {"text": ...}. A bearer token is read from the configured env var."""

    def __init__(self, endpoint: str, timeout: float = 60.0,
                 token_env: str = "LM_API_TOKEN",
                 session: Optional[requests.Session] = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self.token_env = token_env
        self.session = session or requests.Session()

    def complete(self, req: LmRequest) -> str:
        headers = {}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self.session.post(self.endpoint, json=req.to_dict(),
                                     headers=headers, timeout=self.timeout)
        except requests.RequestException as e:
            raise TransportError(f"LM endpoint unreachable at {self.endpoint}: {e}") from e
        if resp.status_code != 200:
            raise TransportError(f"LM endpoint returned {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            return body["text"]
        except (ValueError, KeyError) as e:
            raise TransportError(f"malformed LM response: {resp.text[:200]}") from e


class RecordingBackend:
    """Wraps any backend, appending (key, request, completion) lines so a
    later run can replay them."""

    def __init__(self, inner, record_path):
        self.inner = inner
        self.record_path = Path(record_path)
        self._lock = threading.Lock()
        self._seen: set[str] = set()
        if self.record_path.exists():
            with self.record_path.open("r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if line:
                        self._seen.add(json.loads(line)["key"])

    def complete(self, req: LmRequest) -> str:
        completion = self.inner.complete(req)
        key = lm_request_key(req)
        with self._lock:
            if key not in self._seen:
                self._seen.add(key)
                self.record_path.parent.mkdir(parents=True, exist_ok=True)
                with self.record_path.open("a", encoding="utf-8") as f:
                    f.write(canonical_json(
                        {"key": key, "request": req.to_dict(), "completion": completion}))
                    f.write("\n")
        return completion


def build_backend(cfg: LmBackendConfig):
    if cfg.kind == "echo":
        backend = EchoBackend()
    elif cfg.kind == "replay":
        backend = ReplayBackend(cfg.replay_path)
    else:
        backend = HttpBackend(cfg.endpoint, timeout=cfg.timeout, token_env=cfg.token_env)
    if cfg.record_path:
        backend = RecordingBackend(backend, cfg.record_path)
    return backend


def complete(cfg: LmBackendConfig, req: LmRequest) -> str:
    return build_backend(cfg).complete(req)


def generate_response(backend, ps: PromptSet, dialog: Dialog,
                      temperature: float = 0.0) -> str:
    """One assistant response for a dialog ending in a user question."""
    req = LmRequest(
        prompt=render_response_prompt(ps, dialog),
        temperature=temperature,
        max_tokens=RESPONSE_MAX_TOKENS,
        stop=("\nUser:", "\nQuestion:"),
    )
    text = backend.complete(req).strip()
    # defensive: a model may echo a role prefix despite the stop sequences
    text = re.sub(r"^\s*assistant\s*:\s*", "", text, flags=re.IGNORECASE)
    return " ".join(line.strip() for line in text.splitlines() if line.strip())
