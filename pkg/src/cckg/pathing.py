"""Simple-path enumeration over the knowledge graph.

Paths are maximal node-simple chains grown depth-first from source
actions (the heads of initial-stage assertions), restricted to edges of
the source's subtopic. Enumeration order is deterministic: sources in
input order, outgoing edges in insertion order.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .kb import (
    Action,
    Assertion,
    FormatError,
    KnowledgeBase,
    Provenance,
)

__all__ = [
    "PathEnumeration",
    "PathLimits",
    "PathRecord",
    "UnknownSource",
    "enumerate_simple_paths",
    "load_paths",
    "path_id",
    "save_paths",
    "select_sources",
]

PATHS_FORMAT = "cckg-paths"
PATHS_VERSION = 1


class UnknownSource(ValueError):
    """A requested source action does not appear in the graph."""


def path_id(assertion_ids: Sequence[str]) -> str:
    return hashlib.sha1("\x1f".join(assertion_ids).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class PathRecord:
    """An ordered, node-simple chain of assertions with matching endpoints."""

    id: str
    subtopic: str
    assertions: tuple[Assertion, ...]

    def __post_init__(self):
        if not self.assertions:
            raise ValueError("a path needs at least one assertion")
        seen = {self.assertions[0].head.norm}
        for prev, cur in zip(self.assertions, self.assertions[1:]):
            if prev.tail.norm != cur.head.norm:
                raise ValueError(
                    f"broken chain: {prev.tail.text!r} does not lead into {cur.head.text!r}"
                )
        for a in self.assertions:
            if a.tail.norm in seen:
                raise ValueError(f"path revisits action {a.tail.text!r}")
            seen.add(a.tail.norm)
        expected = path_id([a.id for a in self.assertions])
        if self.id != expected:
            raise ValueError(f"path id {self.id!r} does not match content id {expected!r}")

    @classmethod
    def from_assertions(cls, subtopic: str, assertions: Sequence[Assertion]) -> "PathRecord":
        return cls(path_id([a.id for a in assertions]), subtopic, tuple(assertions))

    def __len__(self) -> int:
        return len(self.assertions)


@dataclass(frozen=True)
class PathLimits:
    """Guard rails against combinatorial blow-up during enumeration."""

    max_depth: int = 30
    max_paths_per_source: int = 5_000
    global_budget: int = 200_000

    def __post_init__(self):
        for name in ("max_depth", "max_paths_per_source", "global_budget"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class PathEnumeration:
    """Enumeration output; `truncated` is set whenever any limit cut it short."""

    paths: list[PathRecord] = field(default_factory=list)
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.paths)


def select_sources(kb: KnowledgeBase) -> list[Action]:
    """Distinct heads of initial-stage assertions, in first-seen order."""
    seen: dict[str, Action] = {}
    for a in kb.assertions:
        if a.meta.source is Provenance.INITIAL and a.head.norm not in seen:
            seen[a.head.norm] = a.head
    return list(seen.values())


def _source_subtopics(kb: KnowledgeBase, source: Action) -> list[str]:
    # Prefer the subtopics of initial assertions headed by the source; a
    # hand-picked source without initial edges falls back to any outgoing edge.
    initial: dict[str, None] = {}
    any_out: dict[str, None] = {}
    for edge in kb.outgoing(source):
        any_out.setdefault(edge.meta.subtopic, None)
        if edge.meta.source is Provenance.INITIAL:
            initial.setdefault(edge.meta.subtopic, None)
    return list(initial) if initial else list(any_out)


class _BudgetExhausted(Exception):
    pass


def _walk_source(
    by_head: dict[str, list[Assertion]],
    source_norm: str,
    subtopic: str,
    limits: PathLimits,
    out: PathEnumeration,
    counters: dict[str, int],
) -> None:
    """Iterative depth-first walk emitting maximal simple paths from one source."""
    # frame: [node norm, cursor into its outgoing edges, extended flag]
    stack: list[list] = [[source_norm, 0, False]]
    path: list[Assertion] = []
    visited = {source_norm}

    while stack:
        frame = stack[-1]
        node, cursor, extended = frame
        edges = by_head.get(node, [])
        at_cap = len(path) >= limits.max_depth
        nxt = None
        if not at_cap:
            while cursor < len(edges):
                candidate = edges[cursor]
                cursor += 1
                if candidate.tail.norm not in visited:
                    nxt = candidate
                    break
            frame[1] = cursor
        if nxt is not None:
            frame[2] = True
            path.append(nxt)
            visited.add(nxt.tail.norm)
            stack.append([nxt.tail.norm, 0, False])
            continue
        if not extended and path:
            if at_cap and any(e.tail.norm not in visited for e in edges):
                out.truncated = True
            out.paths.append(PathRecord.from_assertions(subtopic, path))
            counters["source"] += 1
            counters["total"] += 1
            if counters["total"] >= limits.global_budget:
                out.truncated = True
                raise _BudgetExhausted
            if counters["source"] >= limits.max_paths_per_source:
                out.truncated = True
                return
        stack.pop()
        if path and stack:
            finished = path.pop()
            visited.discard(finished.tail.norm)


def enumerate_simple_paths(
    kb: KnowledgeBase,
    sources: Sequence[Action],
    limits: PathLimits | None = None,
) -> PathEnumeration:
    """All maximal simple paths from each source within its subtopic subgraph.

    A path ends when no outgoing edge reaches an unvisited action or the
    depth limit is hit; hitting any limit marks the result truncated.
    """
    limits = limits or PathLimits()
    out = PathEnumeration()
    counters = {"total": 0}
    for source in sources:
        if not kb.has_action(source):
            raise UnknownSource(f"action {source.text!r} is not in the graph")
    adjacency: dict[str, dict[str, list[Assertion]]] = {}

    def by_head_for(subtopic: str) -> dict[str, list[Assertion]]:
        if subtopic not in adjacency:
            grouped: dict[str, list[Assertion]] = {}
            for e in kb.assertions:
                if e.meta.subtopic == subtopic:
                    grouped.setdefault(e.head.norm, []).append(e)
            adjacency[subtopic] = grouped
        return adjacency[subtopic]

    try:
        for source in sources:
            counters["source"] = 0
            for subtopic in _source_subtopics(kb, source):
                _walk_source(by_head_for(subtopic), source.norm, subtopic, limits, out, counters)
                if counters["source"] >= limits.max_paths_per_source:
                    break
    except _BudgetExhausted:
        pass
    return out


def save_paths(paths: Sequence[PathRecord], destination: str | Path) -> None:
    """Write paths as UTF-8 JSON lines: a header, then one record per path."""
    with Path(destination).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": PATHS_FORMAT, "version": PATHS_VERSION}) + "\n")
        for p in paths:
            record = {
                "id": p.id,
                "subtopic": p.subtopic,
                "assertion_ids": [a.id for a in p.assertions],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_paths(source: str | Path, kb: KnowledgeBase) -> list[PathRecord]:
    """Read a paths file, resolving assertion ids against `kb`."""
    records: list[PathRecord] = []
    saw_header = False
    with Path(source).open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"not valid JSON: {exc.msg}", line_no) from None
            if not saw_header:
                if not isinstance(obj, dict) or obj.get("format") != PATHS_FORMAT:
                    raise FormatError(f"expected {PATHS_FORMAT} header", line_no)
                if obj.get("version") != PATHS_VERSION:
                    raise FormatError(f"unsupported version {obj.get('version')!r}", line_no)
                saw_header = True
                continue
            if not isinstance(obj, dict) or "assertion_ids" not in obj:
                raise FormatError("record needs 'id', 'subtopic', 'assertion_ids'", line_no)
            assertions = []
            for aid in obj["assertion_ids"]:
                found = kb.get(aid)
                if found is None:
                    raise FormatError(f"assertion {aid!r} not present in the graph", line_no)
                assertions.append(found)
            try:
                record = PathRecord(str(obj["id"]), str(obj.get("subtopic", "")), tuple(assertions))
            except ValueError as exc:
                raise FormatError(str(exc), line_no) from None
            records.append(record)
    if not saw_header:
        raise FormatError(f"empty file, expected {PATHS_FORMAT} header", 1)
    return records
