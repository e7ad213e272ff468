"""Directed labeled knowledge graph of cultural if-then assertions.

Core storage for the toolkit: the five relation kinds, normalized action
identity, duplicate-free edge insertion, summary statistics, and
line-delimited persistence of graphs.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, annotations only
    from .pathing import PathRecord

__all__ = [
    "Action",
    "Assertion",
    "AssertionMeta",
    "DanglingPathReference",
    "EXPANDABLE_RELATIONS",
    "FormatError",
    "InsertOutcome",
    "InvalidAssertion",
    "KbStats",
    "KnowledgeBase",
    "Provenance",
    "RelationKind",
    "action_id",
    "assertion_id",
    "compute_stats",
    "load_kb",
    "normalize_action_text",
    "save_kb",
]

KB_FORMAT = "cckg-kb"
KB_VERSION = 1

_RECORD_FIELDS = (
    "id",
    "head",
    "relation",
    "tail",
    "country",
    "language",
    "topic",
    "subtopic",
    "iteration",
    "source",
    "parent_id",
)


class InvalidAssertion(ValueError):
    """Raised for self-loops, empty action texts, or inconsistent provenance."""


class DanglingPathReference(ValueError):
    """A path cites an assertion id that is not present in the graph."""


class FormatError(ValueError):
    """A persisted record could not be decoded; carries the 1-based line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class RelationKind(Enum):
    """The five inferential link types between actions."""

    X_NEXT = "xNext"
    X_EFFECT = "xEffect"
    X_NEED = "xNeed"
    O_NEXT = "oNext"
    O_EFFECT = "oEffect"

    @property
    def canonical(self) -> str:
        """ASCII tag used on the wire and in files; round-trips via parse()."""
        return self.value

    @classmethod
    def parse(cls, tag: str) -> "RelationKind":
        try:
            return cls(tag)
        except ValueError:
            raise ValueError(f"unknown relation tag {tag!r}") from None


#: Relations whose assertions are eligible for iterative expansion.
EXPANDABLE_RELATIONS = frozenset({RelationKind.X_NEXT, RelationKind.O_NEXT})


class Provenance(Enum):
    """How an assertion entered the graph."""

    INITIAL = "initial"
    INTERMEDIATE = "intermediate"
    FORWARD = "forward"


def normalize_action_text(text: str) -> str:
    """Casefold, collapse internal whitespace, trim. Idempotent."""
    return " ".join(text.casefold().split())


def action_id(normalized_text: str) -> str:
    return hashlib.sha1(normalized_text.encode("utf-8")).hexdigest()[:16]


def assertion_id(head_norm: str, relation: RelationKind, tail_norm: str) -> str:
    payload = "\x1f".join((head_norm, relation.canonical, tail_norm))
    return hashlib.sha1(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Action:
    """A free-text activity phrase. Identity is the normalized text.

    Two actions compare (and hash) equal iff their normalized texts are
    identical; the original surface form is preserved for display.
    """

    text: str

    def __post_init__(self):
        trimmed = self.text.strip()
        if not trimmed:
            raise InvalidAssertion("action text is empty")
        object.__setattr__(self, "text", trimmed)

    @cached_property
    def norm(self) -> str:
        return normalize_action_text(self.text)

    @cached_property
    def id(self) -> str:
        return action_id(self.norm)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Action):
            return NotImplemented
        return self.norm == other.norm

    def __hash__(self) -> int:
        return hash(self.norm)

    def __repr__(self) -> str:
        return f"Action({self.text!r})"


@dataclass(frozen=True)
class AssertionMeta:
    """Provenance attached to one assertion."""

    country: str = ""
    language: str = ""
    topic: str = ""
    subtopic: str = ""
    iteration: int = 0
    source: Provenance = Provenance.INITIAL
    parent_id: str | None = None

    def __post_init__(self):
        if self.iteration < 0:
            raise InvalidAssertion(f"iteration must be >= 0, got {self.iteration}")
        if (self.iteration == 0) != (self.source is Provenance.INITIAL):
            raise InvalidAssertion(
                f"iteration {self.iteration} inconsistent with source {self.source.value!r}"
            )
        if self.source is Provenance.INITIAL:
            if self.parent_id is not None:
                raise InvalidAssertion("initial assertions carry no parent_id")
        elif not self.parent_id:
            raise InvalidAssertion(f"{self.source.value} assertions need a parent_id")


@dataclass(frozen=True)
class Assertion:
    """One edge: a typed if-then link between two distinct actions."""

    head: Action
    relation: RelationKind
    tail: Action
    meta: AssertionMeta = AssertionMeta()

    def __post_init__(self):
        if self.head.norm == self.tail.norm:
            raise InvalidAssertion(f"self-loop rejected: {self.head.text!r}")

    @cached_property
    def id(self) -> str:
        return assertion_id(self.head.norm, self.relation, self.tail.norm)

    @property
    def key(self) -> tuple[str, str, str]:
        """Duplicate identity: (normalized head, relation, normalized tail)."""
        return (self.head.norm, self.relation.canonical, self.tail.norm)

    def with_meta(self, **changes) -> "Assertion":
        return replace(self, meta=replace(self.meta, **changes))


class InsertOutcome(Enum):
    INSERTED = "inserted"
    DUPLICATE = "duplicate"


class KnowledgeBase:
    """Directed labeled multigraph over canonical action strings.

    Duplicate identity ignores metadata: the first writer of a
    (head, relation, tail) triple wins. Mutation is single-writer; reads
    are safe from any number of threads against a quiescent instance.
    """

    def __init__(self, country: str = "", language: str = ""):
        self.country = country
        self.language = language
        self._edges: dict[tuple[str, str, str], Assertion] = {}
        self._by_id: dict[str, Assertion] = {}
        self._nodes: dict[str, Action] = {}
        self._out: dict[str, list[str]] = {}

    def __len__(self) -> int:
        return len(self._edges)

    def __contains__(self, assertion: Assertion) -> bool:
        return assertion.key in self._edges

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return (
            self.country == other.country
            and self.language == other.language
            and list(self._edges.values()) == list(other._edges.values())
        )

    @property
    def assertions(self) -> list[Assertion]:
        """All edges in insertion order."""
        return list(self._edges.values())

    def insert(self, assertion: Assertion) -> InsertOutcome:
        """Add an edge; duplicates (by normalized triple) leave the graph unchanged."""
        if assertion.head.norm == assertion.tail.norm:
            raise InvalidAssertion(f"self-loop rejected: {assertion.head.text!r}")
        if assertion.key in self._edges:
            return InsertOutcome.DUPLICATE
        self._edges[assertion.key] = assertion
        self._by_id[assertion.id] = assertion
        for node in (assertion.head, assertion.tail):
            self._nodes.setdefault(node.norm, node)
            self._out.setdefault(node.id, [])
        self._out[assertion.head.id].append(assertion.id)
        return InsertOutcome.INSERTED

    def get(self, assertion_id_: str) -> Assertion | None:
        return self._by_id.get(assertion_id_)

    def unique_actions(self) -> set[Action]:
        """Every distinct normalized action appearing as any head or tail."""
        return set(self._nodes.values())

    def actions(self) -> list[Action]:
        """Unique actions in first-seen order."""
        return list(self._nodes.values())

    def has_action(self, action: Action) -> bool:
        return action.norm in self._nodes

    def outgoing(self, action: Action) -> list[Assertion]:
        """Edges headed by `action`, in insertion order."""
        return [self._by_id[i] for i in self._out.get(action.id, ())]


@dataclass(frozen=True)
class KbStats:
    """Summary counters for one graph and its enumerated paths."""

    unique_nodes: int
    total_assertions: int
    unique_paths: int
    avg_path_length: float
    eval_assertions: int = 0

    def __post_init__(self):
        for name in ("unique_nodes", "total_assertions", "unique_paths", "eval_assertions"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.unique_paths == 0 and self.avg_path_length != 0.0:
            raise ValueError("avg_path_length must be 0 when there are no paths")


def compute_stats(
    kb: KnowledgeBase,
    paths: Sequence["PathRecord"] = (),
    eval_assertions: int = 0,
) -> KbStats:
    """Count nodes, edges, and paths; average path length is in assertions per path."""
    total_len = 0
    for p in paths:
        for a in p.assertions:
            if kb.get(a.id) is None:
                raise DanglingPathReference(
                    f"path {p.id} cites assertion {a.id} absent from the graph"
                )
        total_len += len(p.assertions)
    n_paths = len(paths)
    return KbStats(
        unique_nodes=len(kb.unique_actions()),
        total_assertions=len(kb),
        unique_paths=n_paths,
        avg_path_length=total_len / n_paths if n_paths else 0.0,
        eval_assertions=eval_assertions,
    )


def _record(assertion: Assertion) -> dict:
    m = assertion.meta
    return {
        "id": assertion.id,
        "head": assertion.head.text,
        "relation": assertion.relation.canonical,
        "tail": assertion.tail.text,
        "country": m.country,
        "language": m.language,
        "topic": m.topic,
        "subtopic": m.subtopic,
        "iteration": m.iteration,
        "source": m.source.value,
        "parent_id": m.parent_id,
    }


def save_kb(kb: KnowledgeBase, destination: str | Path) -> None:
    """Write a graph as UTF-8 JSON lines: one header, then one edge per line.

    Edge order is insertion order, so identical build runs produce
    byte-identical files.
    """
    path = Path(destination)
    with path.open("w", encoding="utf-8") as fh:
        header = {
            "format": KB_FORMAT,
            "version": KB_VERSION,
            "country": kb.country,
            "language": kb.language,
        }
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for assertion in kb.assertions:
            fh.write(json.dumps(_record(assertion), ensure_ascii=False) + "\n")


def _parse_record(obj: dict, line: int) -> Assertion:
    missing = [k for k in _RECORD_FIELDS if k not in obj]
    if missing:
        raise FormatError(f"record missing fields {missing}", line)
    try:
        relation = RelationKind.parse(obj["relation"])
    except ValueError as exc:
        raise FormatError(str(exc), line) from None
    try:
        source = Provenance(obj["source"])
    except ValueError:
        raise FormatError(f"unknown source tag {obj['source']!r}", line) from None
    try:
        assertion = Assertion(
            head=Action(str(obj["head"])),
            relation=relation,
            tail=Action(str(obj["tail"])),
            meta=AssertionMeta(
                country=str(obj["country"]),
                language=str(obj["language"]),
                topic=str(obj["topic"]),
                subtopic=str(obj["subtopic"]),
                iteration=int(obj["iteration"]),
                source=source,
                parent_id=obj["parent_id"],
            ),
        )
    except (InvalidAssertion, TypeError, ValueError) as exc:
        raise FormatError(f"invalid record: {exc}", line) from None
    if assertion.id != obj["id"]:
        raise FormatError(
            f"stored id {obj['id']!r} does not match content id {assertion.id!r}", line
        )
    return assertion


def load_kb(source: str | Path) -> KnowledgeBase:
    """Read a graph written by save_kb; load(save(kb)) is the identity."""
    path = Path(source)
    kb: KnowledgeBase | None = None
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"not valid JSON: {exc.msg}", line_no) from None
            if kb is None:
                if not isinstance(obj, dict) or obj.get("format") != KB_FORMAT:
                    raise FormatError(f"expected {KB_FORMAT} header", line_no)
                if obj.get("version") != KB_VERSION:
                    raise FormatError(f"unsupported version {obj.get('version')!r}", line_no)
                kb = KnowledgeBase(str(obj.get("country", "")), str(obj.get("language", "")))
                continue
            if not isinstance(obj, dict):
                raise FormatError("record is not an object", line_no)
            assertion = _parse_record(obj, line_no)
            if kb.insert(assertion) is InsertOutcome.DUPLICATE:
                raise FormatError(f"duplicate assertion {assertion.id}", line_no)
    if kb is None:
        raise FormatError(f"empty file, expected {KB_FORMAT} header", 1)
    return kb


def insert_all(kb: KnowledgeBase, assertions: Iterable[Assertion]) -> list[InsertOutcome]:
    """Insert a batch in order; convenience used by fixtures and demos."""
    return [kb.insert(a) for a in assertions]
