"""Two-stage graph construction from a generative model.

Stage one elicits initial assertions per subtopic. Stage two runs a
user-bounded number of expansion rounds over a frontier of xNext/oNext
assertions: each frontier entry is decomposed into an endpoint-preserving
chain of intermediate steps, then continued forward from its tail.
Forward continuations whose tail is similar (cosine strictly above the
threshold) to an already-known action are rewritten onto that canonical
action and do not rejoin the frontier; novel continuations join the next
frontier, at most `frontier_cap` per expanded tail action, in generation
order.
"""

from __future__ import annotations

import json
import logging
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import nearest
from .gateway import (
    BackendRejected,
    BackendUnavailable,
    Gateway,
    GenerationRequest,
    render,
)
from .kb import (
    EXPANDABLE_RELATIONS,
    Action,
    Assertion,
    AssertionMeta,
    InsertOutcome,
    InvalidAssertion,
    KnowledgeBase,
    Provenance,
    RelationKind,
)
from .prompts import FORWARD_EXPANSION, INITIAL_GENERATION, INTERMEDIATE_EXPANSION

log = logging.getLogger(__name__)

__all__ = [
    "ActionPool",
    "CanonicalizeResult",
    "ChainBroken",
    "ConfigError",
    "ExpansionFrontier",
    "IterationStats",
    "ParsedBatch",
    "PipelineConfig",
    "RunReport",
    "Unparseable",
    "canonicalize",
    "forward_expansion",
    "initial_generation",
    "intermediate_expansion",
    "load_taxonomy",
    "parse_assertions",
    "run_pipeline",
]

DEFAULT_SIMILARITY_THRESHOLD = 0.8
DEFAULT_FRONTIER_CAP = 6

_FENCE = re.compile(r"```[a-zA-Z]*\n(.*?)```", re.DOTALL)


class Unparseable(ValueError):
    """No assertion records could be recovered from a non-empty response."""


class ChainBroken(ValueError):
    """A decomposition response does not form an endpoint-matching chain."""


class ConfigError(ValueError):
    """Bad or missing pipeline configuration."""


def load_taxonomy(path: str | Path) -> dict[str, list[str]]:
    """Read a topic -> subtopic-list mapping from a JSON file."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"taxonomy file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"taxonomy file {p} is not valid JSON: {exc}") from None
    if not isinstance(data, dict) or not all(
        isinstance(k, str) and isinstance(v, list) and all(isinstance(s, str) for s in v)
        for k, v in data.items()
    ):
        raise ConfigError(f"taxonomy file {p} must map topic -> list of subtopics")
    return data


def default_taxonomy() -> dict[str, list[str]]:
    """The shipped 11-topic daily-life taxonomy."""
    return load_taxonomy(Path(__file__).parent / "data" / "default_taxonomy.json")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a construction run needs besides the backends."""

    country: str
    language: str
    taxonomy: Mapping[str, Sequence[str]]
    depth: int = 3
    temperature: float = 1.0
    tau: float = DEFAULT_SIMILARITY_THRESHOLD
    frontier_cap: int = DEFAULT_FRONTIER_CAP
    seed: int = 0

    def __post_init__(self):
        if not self.country or not self.language:
            raise ConfigError("country and language are required")
        if self.depth < 0:
            raise ConfigError("depth must be >= 0")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must be within [0, 1]")
        if self.frontier_cap < 1:
            raise ConfigError("frontier_cap must be >= 1")
        if not self.taxonomy:
            raise ConfigError("taxonomy must not be empty")

    def topic_of(self, subtopic: str) -> str:
        for topic, subs in self.taxonomy.items():
            if subtopic in subs:
                return topic
        raise ConfigError(f"subtopic {subtopic!r} not in taxonomy")

    def subtopics(self) -> list[tuple[str, str]]:
        """(topic, subtopic) pairs in taxonomy file order."""
        return [(t, s) for t, subs in self.taxonomy.items() for s in subs]


@dataclass(frozen=True)
class ParsedBatch:
    """Assertions that survived filtering, plus how many records were dropped."""

    kept: tuple[Assertion, ...]
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.kept)


def _strip_fences(raw: str) -> str:
    m = _FENCE.search(raw)
    return m.group(1) if m else raw


def _extract_records(raw: str) -> list | None:
    """Pull a JSON array out of model output; fall back to 'head | rel | tail' lines."""
    text = _strip_fences(raw).strip()
    if not text:
        return None
    try:
        data = json.loads(text)
        if isinstance(data, list):
            return data
    except json.JSONDecodeError:
        pass
    decoder = json.JSONDecoder()
    for start in (i for i, ch in enumerate(text) if ch == "["):
        try:
            data, _ = decoder.raw_decode(text[start:])
        except json.JSONDecodeError:
            continue
        if isinstance(data, list):
            return data
    rows = []
    for line in text.splitlines():
        parts = [p.strip() for p in line.split("|")]
        if len(parts) == 3 and all(parts):
            rows.append({"if": parts[0], "relation": parts[1], "then": parts[2]})
    return rows or None


def _record_to_assertion(record, meta: AssertionMeta) -> Assertion | None:
    if not isinstance(record, dict):
        return None
    head, rel_tag, tail = record.get("if"), record.get("relation"), record.get("then")
    if not isinstance(head, str) or not isinstance(tail, str) or not isinstance(rel_tag, str):
        return None
    try:
        relation = RelationKind.parse(rel_tag.strip())
        return Assertion(Action(head), relation, Action(tail), meta)
    except (InvalidAssertion, ValueError):
        return None


def parse_assertions(raw: str, ctx: AssertionMeta) -> ParsedBatch:
    """Parse model output into assertions stamped with `ctx`.

    Records failing assertion invariants or bearing unknown relations are
    dropped and counted. Raises Unparseable only when a non-empty response
    yields no recoverable records at all; an empty response (or an empty
    JSON array) parses to an empty batch.
    """
    if not raw.strip():
        return ParsedBatch(())
    records = _extract_records(raw)
    if records is None:
        raise Unparseable(f"no assertion records recoverable from {raw[:80]!r}")
    kept: list[Assertion] = []
    dropped = 0
    for record in records:
        assertion = _record_to_assertion(record, ctx)
        if assertion is None:
            dropped += 1
        else:
            kept.append(assertion)
    return ParsedBatch(tuple(kept), dropped)


def _with_context(exc: Exception, context: str) -> Exception:
    return type(exc)(f"{context}: {exc}")


def initial_generation(
    cfg: PipelineConfig, subtopic: str, gateway: Gateway
) -> ParsedBatch:
    """Elicit the seed assertions for one subtopic (iteration 0)."""
    topic = cfg.topic_of(subtopic)
    prompt = render(
        INITIAL_GENERATION,
        {"sub_topic": subtopic, "location": cfg.country, "language": cfg.language},
    )
    meta = AssertionMeta(
        country=cfg.country,
        language=cfg.language,
        topic=topic,
        subtopic=subtopic,
        iteration=0,
        source=Provenance.INITIAL,
    )
    request = GenerationRequest(prompt, temperature=cfg.temperature, tag=f"init:{subtopic}")
    try:
        result = gateway.generate(request)
        return parse_assertions(result.text, meta)
    except (BackendUnavailable, BackendRejected, Unparseable) as exc:
        raise _with_context(exc, f"subtopic {subtopic!r}") from exc


def _event_bindings(a: Assertion) -> dict[str, str]:
    return {
        "initial_event": f"if {a.head.text}, then {a.tail.text}",
        "init_action": a.head.text,
        "init_knowledge": a.tail.text,
    }


def _child_meta(a: Assertion, source: Provenance) -> AssertionMeta:
    return AssertionMeta(
        country=a.meta.country,
        language=a.meta.language,
        topic=a.meta.topic,
        subtopic=a.meta.subtopic,
        iteration=a.meta.iteration + 1,
        source=source,
        parent_id=a.id,
    )


def intermediate_expansion(
    a: Assertion, cfg: PipelineConfig, gateway: Gateway
) -> list[Assertion]:
    """Decompose an assertion into an endpoint-preserving chain of steps.

    The chain must start at the assertion's head and end at its tail, with
    consecutive links sharing endpoints; anything else raises ChainBroken.
    Links without a relation tag inherit the parent's relation. An empty
    decomposition is valid and yields no assertions.
    """
    if a.relation not in EXPANDABLE_RELATIONS:
        raise ValueError(f"only xNext/oNext assertions expand, got {a.relation.canonical}")
    prompt = render(INTERMEDIATE_EXPANSION, _event_bindings(a))
    request = GenerationRequest(
        prompt, temperature=cfg.temperature, tag=f"mid:{a.meta.subtopic}:{a.id}"
    )
    result = gateway.generate(request)
    if not result.text.strip():
        return []
    records = _extract_records(result.text)
    if records is None:
        raise Unparseable(f"no chain recoverable from {result.text[:80]!r}")
    if not records:
        return []
    meta = _child_meta(a, Provenance.INTERMEDIATE)
    links: list[Assertion] = []
    for record in records:
        if not isinstance(record, dict):
            raise ChainBroken(f"chain link is not an object: {record!r}")
        head, tail = record.get("if"), record.get("then")
        rel_tag = record.get("relation")
        if not isinstance(head, str) or not isinstance(tail, str):
            raise ChainBroken(f"chain link missing actions: {record!r}")
        try:
            relation = a.relation if not rel_tag else RelationKind.parse(str(rel_tag).strip())
            links.append(Assertion(Action(head), relation, Action(tail), meta))
        except (InvalidAssertion, ValueError) as exc:
            raise ChainBroken(str(exc)) from None
    if links[0].head.norm != a.head.norm:
        raise ChainBroken(
            f"chain starts at {links[0].head.text!r} instead of {a.head.text!r}"
        )
    if links[-1].tail.norm != a.tail.norm:
        raise ChainBroken(
            f"chain ends at {links[-1].tail.text!r} instead of {a.tail.text!r}"
        )
    for prev, cur in zip(links, links[1:]):
        if prev.tail.norm != cur.head.norm:
            raise ChainBroken(
                f"chain breaks between {prev.tail.text!r} and {cur.head.text!r}"
            )
    return links


def forward_expansion(
    a: Assertion, cfg: PipelineConfig, gateway: Gateway
) -> ParsedBatch:
    """Continuations growing out of the assertion's tail.

    Only records headed by the tail with an xNext/oNext relation survive;
    everything else counts as dropped. Frontier capping is the pipeline's
    job, so all survivors are returned here.
    """
    if a.relation not in EXPANDABLE_RELATIONS:
        raise ValueError(f"only xNext/oNext assertions expand, got {a.relation.canonical}")
    prompt = render(FORWARD_EXPANSION, _event_bindings(a))
    request = GenerationRequest(
        prompt, temperature=cfg.temperature, tag=f"fwd:{a.meta.subtopic}:{a.id}"
    )
    result = gateway.generate(request)
    batch = parse_assertions(result.text, _child_meta(a, Provenance.FORWARD))
    kept: list[Assertion] = []
    dropped = batch.dropped
    for candidate in batch.kept:
        if candidate.head.norm != a.tail.norm or candidate.relation not in EXPANDABLE_RELATIONS:
            dropped += 1
        else:
            kept.append(candidate)
    return ParsedBatch(tuple(kept), dropped)


class ActionPool:
    """Unique actions seen so far, each embedded once at first sight.

    Vectors are computed over normalized action text and cached for the
    life of the pool.
    """

    def __init__(self, embedder):
        self.embedder = embedder
        self._entries: dict[str, tuple[Action, np.ndarray]] = {}
        self._by_id: dict[str, Action] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, action: Action) -> bool:
        return action.norm in self._entries

    def add(self, action: Action) -> bool:
        """Register an action; returns True when it is new to the pool."""
        if action.norm in self._entries:
            return False
        [vector] = self.embedder.embed([action.norm])
        self._entries[action.norm] = (action, vector)
        self._by_id[action.id] = action
        return True

    def entries(self) -> list[tuple[str, np.ndarray]]:
        return [(action.id, vector) for action, vector in self._entries.values()]

    def by_id(self, action_id: str) -> Action:
        return self._by_id[action_id]


@dataclass(frozen=True)
class CanonicalizeResult:
    canonical: Action
    score: float
    replaced: bool


def canonicalize(
    candidate: Action, pool: ActionPool, tau: float = DEFAULT_SIMILARITY_THRESHOLD
) -> CanonicalizeResult:
    """Match a candidate action against the pool of known actions.

    Replacement requires similarity strictly above `tau`; a score exactly
    at the threshold keeps the candidate as novel. An empty pool scores -1.
    Ties between equally similar known actions go to the smallest id.
    """
    if len(pool) == 0:
        return CanonicalizeResult(candidate, -1.0, False)
    [query] = pool.embedder.embed([candidate.norm])
    best_id, score = nearest(query, pool.entries())
    if score > tau:
        return CanonicalizeResult(pool.by_id(best_id), score, True)
    return CanonicalizeResult(candidate, score, False)


@dataclass(frozen=True)
class ExpansionFrontier:
    """Assertions eligible for the next expansion round.

    Only xNext/oNext entries are retained, at most `cap` per head action
    (the tail being expanded), keeping the first arrivals in order.
    """

    iteration: int
    entries: tuple[Assertion, ...]

    @classmethod
    def build(
        cls, iteration: int, candidates: Sequence[Assertion], cap: int
    ) -> "ExpansionFrontier":
        kept: list[Assertion] = []
        per_head: dict[str, int] = {}
        for a in candidates:
            if a.relation not in EXPANDABLE_RELATIONS:
                continue
            count = per_head.get(a.head.norm, 0)
            if count >= cap:
                continue
            per_head[a.head.norm] = count + 1
            kept.append(a)
        return cls(iteration, tuple(kept))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class IterationStats:
    """Per-round counters; round 0 is the initial generation stage."""

    iteration: int
    generated: int = 0
    inserted: int = 0
    duplicates: int = 0
    replaced: int = 0
    dropped: int = 0
    frontier_size: int = 0


@dataclass
class RunReport:
    country: str
    language: str
    depth: int
    seed: int
    iterations: list[IterationStats] = field(default_factory=list)

    def totals(self) -> IterationStats:
        total = IterationStats(iteration=-1)
        for it in self.iterations:
            total.generated += it.generated
            total.inserted += it.inserted
            total.duplicates += it.duplicates
            total.replaced += it.replaced
            total.dropped += it.dropped
        return total

    def summary(self) -> str:
        header = (
            f"construction run: country={self.country} language={self.language} "
            f"depth={self.depth} seed={self.seed}\n"
        )
        cols = f"{'iter':>5} {'generated':>10} {'inserted':>9} {'duplicates':>11} {'replaced':>9} {'dropped':>8} {'frontier':>9}\n"
        rows = [
            f"{it.iteration:>5} {it.generated:>10} {it.inserted:>9} "
            f"{it.duplicates:>11} {it.replaced:>9} {it.dropped:>8} {it.frontier_size:>9}\n"
            for it in self.iterations
        ]
        t = self.totals()
        footer = (
            f"totals: generated={t.generated} inserted={t.inserted} "
            f"duplicates={t.duplicates} replaced={t.replaced} dropped={t.dropped}\n"
        )
        return header + cols + "".join(rows) + footer


_PER_ITEM_ERRORS = (BackendUnavailable, BackendRejected, Unparseable, ChainBroken)


def _insert(kb: KnowledgeBase, assertion: Assertion, stats: IterationStats) -> InsertOutcome:
    outcome = kb.insert(assertion)
    if outcome is InsertOutcome.INSERTED:
        stats.inserted += 1
    else:
        stats.duplicates += 1
    return outcome


def run_pipeline(
    cfg: PipelineConfig, gateway: Gateway, embedder
) -> tuple[KnowledgeBase, RunReport]:
    """Build a knowledge graph end to end.

    Backend and parse failures are per-item: the offending subtopic or
    frontier entry is logged and skipped so a long run survives flaky
    responses. Only configuration errors abort the run. With a scripted
    backend the result is a pure function of (config, fixtures).
    """
    kb = KnowledgeBase(cfg.country, cfg.language)
    pool = ActionPool(embedder)
    report = RunReport(cfg.country, cfg.language, cfg.depth, cfg.seed)

    stats0 = IterationStats(iteration=0)
    seed_entries: list[Assertion] = []
    for _topic, subtopic in cfg.subtopics():
        try:
            batch = initial_generation(cfg, subtopic, gateway)
        except _PER_ITEM_ERRORS as exc:
            log.warning("initial generation failed, skipping: %s", exc)
            stats0.dropped += 1
            continue
        stats0.generated += len(batch.kept) + batch.dropped
        stats0.dropped += batch.dropped
        for assertion in batch.kept:
            if _insert(kb, assertion, stats0) is InsertOutcome.INSERTED:
                pool.add(assertion.head)
                pool.add(assertion.tail)
                seed_entries.append(assertion)
    frontier = ExpansionFrontier.build(0, seed_entries, cfg.frontier_cap)
    stats0.frontier_size = len(frontier)
    report.iterations.append(stats0)

    for t in range(1, cfg.depth + 1):
        stats = IterationStats(iteration=t)
        next_entries: list[Assertion] = []
        for entry in frontier.entries:
            # intermediate expansion: endpoint-preserving chain, never in frontier
            try:
                links = intermediate_expansion(entry, cfg, gateway)
            except _PER_ITEM_ERRORS as exc:
                log.warning("intermediate expansion of %s failed: %s", entry.id, exc)
                links = []
                stats.dropped += 1
            stats.generated += len(links)
            for link in links:
                if _insert(kb, link, stats) is InsertOutcome.INSERTED:
                    pool.add(link.head)
                    pool.add(link.tail)

            # forward expansion with similarity canonicalization
            try:
                batch = forward_expansion(entry, cfg, gateway)
            except _PER_ITEM_ERRORS as exc:
                log.warning("forward expansion of %s failed: %s", entry.id, exc)
                stats.dropped += 1
                continue
            stats.generated += len(batch.kept) + batch.dropped
            stats.dropped += batch.dropped
            for candidate in batch.kept:
                match = canonicalize(candidate.tail, pool, cfg.tau)
                if match.replaced:
                    stats.replaced += 1
                    if match.canonical.norm == candidate.head.norm:
                        # canonical rewrite collapsed the edge into a self-loop
                        stats.dropped += 1
                        continue
                    rewritten = Assertion(
                        candidate.head, candidate.relation, match.canonical, candidate.meta
                    )
                    _insert(kb, rewritten, stats)
                    continue  # canonicalized continuations never rejoin the frontier
                if _insert(kb, candidate, stats) is InsertOutcome.INSERTED:
                    pool.add(candidate.tail)
                    next_entries.append(candidate)
        frontier = ExpansionFrontier.build(t, next_entries, cfg.frontier_cap)
        stats.frontier_size = len(frontier)
        report.iterations.append(stats)

    return kb, report
