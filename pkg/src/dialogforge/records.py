"""Record types and line-oriented dataset I/O.

Every dataset in the toolchain is a JSONL file: one record per line,
sorted keys, UTF-8, trailing newline. Serialization is canonical so that
identical records always produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import RecordError

USER = "user"
ASSISTANT = "assistant"
ROLES = (USER, ASSISTANT)

FILTER_NAMES = ("intent", "answer_leak", "last_turn", "nli", "parse_error")


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, no whitespace, raw unicode."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True)
class QaRecord:
    """One source question/answer pair. The answer may be empty for
    query-only sources (e.g. search logs)."""

    id: str
    question: str
    answer: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise RecordError("QaRecord id must be non-empty")
        if not self.question.strip():
            raise RecordError(f"QaRecord {self.id!r} has an empty question")

    def to_dict(self) -> dict:
        d = {"id": self.id, "question": self.question, "answer": self.answer}
        if self.meta:
            d["meta"] = dict(self.meta)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QaRecord":
        return cls(
            id=d["id"],
            question=d["question"],
            answer=d.get("answer", ""),
            meta=d.get("meta", {}),
        )


@dataclass(frozen=True)
class DialogTurn:
    role: str
    text: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise RecordError(f"invalid role {self.role!r}")
        if not self.text:
            raise RecordError("turn text must be non-empty")

    def to_dict(self) -> dict:
        return {"role": self.role, "text": self.text}

    @classmethod
    def from_dict(cls, d: dict) -> "DialogTurn":
        return cls(role=d["role"], text=d["text"])


@dataclass(frozen=True)
class Dialog:
    """An ordered list of turns. A well-formed dialog ends with a user
    turn carrying the implicit question; an empty dialog is only used as
    the placeholder for unparseable completions."""

    turns: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))

    def ends_with_user(self) -> bool:
        return bool(self.turns) and self.turns[-1].role == USER

    def last_user_text(self) -> str:
        if not self.ends_with_user():
            raise RecordError("dialog does not end with a user turn")
        return self.turns[-1].text

    def text(self) -> str:
        """All turn texts joined with spaces, role prefixes dropped."""
        return " ".join(t.text for t in self.turns)

    def to_list(self) -> list:
        return [t.to_dict() for t in self.turns]

    @classmethod
    def from_list(cls, items: list) -> "Dialog":
        return cls(tuple(DialogTurn.from_dict(t) for t in items))


@dataclass(frozen=True)
class FilterScores:
    intent_similarity: float = 0.0
    answer_leak: float = 0.0
    last_turn_similarity: float = 0.0
    nli_intent: Optional[float] = None

    def __post_init__(self):
        if not -1.0 <= self.intent_similarity <= 1.0:
            raise RecordError("intent_similarity out of [-1,1]")
        if not 0.0 <= self.answer_leak <= 1.0:
            raise RecordError("answer_leak out of [0,1]")
        if not -1.0 <= self.last_turn_similarity <= 1.0:
            raise RecordError("last_turn_similarity out of [-1,1]")
        if self.nli_intent is not None and not 0.0 <= self.nli_intent <= 1.0:
            raise RecordError("nli_intent out of [0,1]")

    def to_dict(self) -> dict:
        d = {
            "intent_similarity": self.intent_similarity,
            "answer_leak": self.answer_leak,
            "last_turn_similarity": self.last_turn_similarity,
        }
        if self.nli_intent is not None:
            d["nli_intent"] = self.nli_intent
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FilterScores":
        return cls(
            intent_similarity=d.get("intent_similarity", 0.0),
            answer_leak=d.get("answer_leak", 0.0),
            last_turn_similarity=d.get("last_turn_similarity", 0.0),
            nli_intent=d.get("nli_intent"),
        )


@dataclass(frozen=True)
class FilterVerdict:
    retained: bool
    failed_filters: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "failed_filters", tuple(self.failed_filters))
        for name in self.failed_filters:
            if name not in FILTER_NAMES:
                raise RecordError(f"unknown filter name {name!r}")
        if self.retained != (len(self.failed_filters) == 0):
            raise RecordError("retained must equal failed_filters being empty")

    def to_dict(self) -> dict:
        return {"retained": self.retained, "failed_filters": list(self.failed_filters)}

    @classmethod
    def from_dict(cls, d: dict) -> "FilterVerdict":
        return cls(retained=d["retained"], failed_filters=tuple(d["failed_filters"]))


@dataclass(frozen=True)
class GeneratedSample:
    """One pipeline output row: the generated dialog plus everything
    needed to audit its filter decision."""

    id: str
    source_question: str
    answer: str
    dialog: Dialog
    reversed_question: str
    scores: FilterScores
    verdict: FilterVerdict

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source_question": self.source_question,
            "answer": self.answer,
            "dialog": self.dialog.to_list(),
            "reversed_question": self.reversed_question,
            "scores": self.scores.to_dict(),
            "verdict": self.verdict.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratedSample":
        return cls(
            id=d["id"],
            source_question=d["source_question"],
            answer=d.get("answer", ""),
            dialog=Dialog.from_list(d["dialog"]),
            reversed_question=d["reversed_question"],
            scores=FilterScores.from_dict(d["scores"]),
            verdict=FilterVerdict.from_dict(d["verdict"]),
        )


@dataclass(frozen=True)
class EvalRecord:
    id: str
    dialog: Dialog
    gold_query: str
    predicted_query: str

    def __post_init__(self):
        if not self.gold_query:
            raise RecordError(f"EvalRecord {self.id!r} has an empty gold_query")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "dialog": self.dialog.to_list(),
            "gold_query": self.gold_query,
            "predicted_query": self.predicted_query,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalRecord":
        return cls(
            id=d["id"],
            dialog=Dialog.from_list(d.get("dialog", [])),
            gold_query=d["gold_query"],
            predicted_query=d["predicted_query"],
        )


RECORD_KINDS = {
    "qa": QaRecord,
    "samples": GeneratedSample,
    "eval": EvalRecord,
}

_HAS_ID = (QaRecord, GeneratedSample, EvalRecord)


def _resolve_kind(kind):
    if isinstance(kind, str):
        try:
            return RECORD_KINDS[kind]
        except KeyError:
            raise RecordError(f"unknown record kind {kind!r}") from None
    return kind


def read_jsonl(path, kind) -> Iterator:
    """Yield records of `kind` from a JSONL file, in file order.

    Raises RecordError with the line number for malformed lines and for
    duplicate ids (naming both lines).
    """
    cls = _resolve_kind(kind)
    path = Path(path)
    seen_ids: dict = {}
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as e:
                raise RecordError(f"invalid JSON ({e.msg}): {line[:120]}",
                                  path=path, line_number=lineno) from e
            try:
                record = cls.from_dict(payload)
            except (KeyError, TypeError) as e:
                raise RecordError(f"missing or invalid field {e}: {line[:120]}",
                                  path=path, line_number=lineno) from e
            except RecordError as e:
                raise RecordError(str(e), path=path, line_number=lineno) from e
            if isinstance(record, _HAS_ID):
                prev = seen_ids.get(record.id)
                if prev is not None:
                    raise RecordError(
                        f"duplicate id {record.id!r} (first seen on line {prev})",
                        path=path, line_number=lineno)
                seen_ids[record.id] = lineno
            yield record


def serialize_record(record) -> str:
    return canonical_json(record.to_dict())


def write_jsonl(path, records: Iterable) -> int:
    """Write records canonically, one per line. Returns the count written.

    Output is byte-identical across runs for identical record sequences.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(serialize_record(record))
            f.write("\n")
            count += 1
    return count
