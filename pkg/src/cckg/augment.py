"""Semantic retrieval over assertions and paths, and prompt assembly.

Assertions render into single if-then sentences (one fixed form per
relation kind); paths render into numbered step sequences. A search index
pairs each rendered text with its embedding; retrieval is an exact scan,
ranked by cosine with ties broken by smallest id. Retrieved context is
prefixed to task prompts in a frozen block layout so augmented prompts
are reproducible bit for bit.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .kb import Assertion, FormatError, RelationKind
from .pathing import PathRecord

__all__ = [
    "AugmentationMode",
    "AugmentationSpec",
    "COT_SUFFIX",
    "EmptyIndex",
    "IndexItem",
    "RenderedPrompt",
    "SearchIndex",
    "assemble_prompt",
    "build_index",
    "items_from_assertions",
    "items_from_paths",
    "load_external_assertions",
    "load_index",
    "render_assertion",
    "render_path",
    "save_index",
    "top_k",
]

INDEX_FORMAT = "cckg-index"
INDEX_VERSION = 1

CONTEXT_HEADER = "Relevant cultural knowledge:"
COT_SUFFIX = "Let's think step by step."


class EmptyIndex(ValueError):
    pass


_SENTENCE_FORMS = {
    RelationKind.X_NEXT: "If x {head}, x will {tail}.",
    RelationKind.X_EFFECT: "If x {head}, x {tail}.",
    RelationKind.X_NEED: "Before x can {head}, x needs to {tail}.",
    RelationKind.O_NEXT: "If x {head}, others want to {tail}.",
    RelationKind.O_EFFECT: "If x {head}, others will {tail}.",
}


def render_assertion(assertion: Assertion) -> str:
    """One if-then sentence in the relation's fixed form."""
    form = _SENTENCE_FORMS[assertion.relation]
    return form.format(head=assertion.head.text, tail=assertion.tail.text)


def render_path(path: PathRecord) -> str:
    """The chain as numbered if-then sentences, one per line."""
    return "\n".join(
        f"{i}. {render_assertion(a)}" for i, a in enumerate(path.assertions, start=1)
    )


@dataclass(frozen=True)
class IndexItem:
    id: str
    text: str
    kind: str  # "assertion" | "path"
    provenance: str = "cckg"

    def __post_init__(self):
        if self.kind not in ("assertion", "path"):
            raise ValueError(f"unknown item kind {self.kind!r}")
        if not self.text.strip():
            raise ValueError("index item text is empty")


def items_from_assertions(assertions: Sequence[Assertion]) -> list[IndexItem]:
    return [IndexItem(a.id, render_assertion(a), "assertion") for a in assertions]


def items_from_paths(paths: Sequence[PathRecord]) -> list[IndexItem]:
    return [IndexItem(p.id, render_path(p), "path") for p in paths]


def load_external_assertions(path: str | Path, provenance: str = "") -> list[IndexItem]:
    """Ingest an external assertion file: one plain-text assertion per line.

    Ids are positional; provenance defaults to the file name. External
    items flow through the same index machinery as native assertions.
    """
    p = Path(path)
    label = provenance or p.name
    items = []
    with p.open("r", encoding="utf-8") as fh:
        for n, raw in enumerate(fh):
            line = raw.strip()
            if line:
                items.append(IndexItem(f"ext-{n:05d}", line, "assertion", provenance=label))
    return items


@dataclass(frozen=True)
class SearchIndex:
    """Immutable embedded corpus: items plus a row-aligned vector matrix."""

    items: tuple[IndexItem, ...]
    vectors: np.ndarray
    fingerprint: str

    def __post_init__(self):
        if len(self.items) != self.vectors.shape[0]:
            raise ValueError("vector count does not match item count")
        ids = [item.id for item in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("index item ids must be unique")

    def __len__(self) -> int:
        return len(self.items)

    def item(self, item_id: str) -> IndexItem:
        for candidate in self.items:
            if candidate.id == item_id:
                return candidate
        raise KeyError(item_id)


def build_index(items: Sequence[IndexItem], embedder) -> SearchIndex:
    """Embed every item's display text once; the result never mutates."""
    if not items:
        raise EmptyIndex("cannot build an index from zero items")
    vectors = np.vstack(embedder.embed([item.text for item in items]))
    return SearchIndex(tuple(items), vectors, embedder.fingerprint)


def top_k(
    index: SearchIndex,
    query: str,
    k: int,
    embedder,
    kind: str | None = None,
) -> list[tuple[str, float]]:
    """The k most similar items (fewer if the index is smaller), exact scan.

    Descending cosine; equal scores rank by smallest id. `kind` restricts
    the scan to one item kind in a mixed index.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if embedder.fingerprint != index.fingerprint:
        raise ValueError(
            f"index built with {index.fingerprint!r}, queried with {embedder.fingerprint!r}"
        )
    rows = [
        i for i, item in enumerate(index.items) if kind is None or item.kind == kind
    ]
    if not rows:
        raise EmptyIndex(f"index holds no items of kind {kind!r}" if kind else "empty index")
    [query_vector] = embedder.embed([query])
    scores = index.vectors[rows] @ query_vector
    ranked = sorted(
        zip(rows, scores), key=lambda pair: (-pair[1], index.items[pair[0]].id)
    )
    return [(index.items[row].id, float(score)) for row, score in ranked[:k]]


class AugmentationMode(Enum):
    BASE = "base"
    COT = "cot"
    ASSERTIONS = "assertions"
    PATH = "path"


_DEFAULT_SHOTS = {AugmentationMode.ASSERTIONS: 5, AugmentationMode.PATH: 1}


@dataclass(frozen=True)
class AugmentationSpec:
    """Which augmentation to apply; retrieval modes carry their index."""

    mode: AugmentationMode
    k: int = 0  # 0 selects the mode default (5 assertion shots, 1 path)
    index: SearchIndex | None = None

    def __post_init__(self):
        if self.mode in (AugmentationMode.BASE, AugmentationMode.COT):
            if self.index is not None:
                raise ValueError(f"{self.mode.value} mode carries no index")
            return
        if self.index is None:
            raise ValueError(f"{self.mode.value} mode requires an index")
        if self.k == 0:
            object.__setattr__(self, "k", _DEFAULT_SHOTS[self.mode])
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    mode: AugmentationMode
    retrieved: tuple[tuple[str, float], ...] = ()


def assemble_prompt(
    task_prompt: str,
    spec: AugmentationSpec,
    query: str,
    embedder=None,
) -> RenderedPrompt:
    """Apply one augmentation mode to a task prompt.

    base: the task prompt unchanged. cot: a step-by-step suffix appended.
    assertions: the top-k retrieved assertion sentences, numbered, under a
    context header. path: the single top-ranked path (already numbered).
    The context block always ends with a blank line before the task prompt.
    """
    if spec.mode is AugmentationMode.BASE:
        return RenderedPrompt(task_prompt, spec.mode)
    if spec.mode is AugmentationMode.COT:
        return RenderedPrompt(f"{task_prompt}\n\n{COT_SUFFIX}", spec.mode)
    if embedder is None:
        raise ValueError("retrieval modes need an embedder")
    assert spec.index is not None
    if spec.mode is AugmentationMode.ASSERTIONS:
        hits = top_k(spec.index, query, spec.k, embedder, kind="assertion")
        lines = [
            f"{i}. {spec.index.item(item_id).text}"
            for i, (item_id, _score) in enumerate(hits, start=1)
        ]
        block = "\n".join(lines)
    else:
        hits = top_k(spec.index, query, 1, embedder, kind="path")
        block = spec.index.item(hits[0][0]).text
    text = f"{CONTEXT_HEADER}\n{block}\n\n{task_prompt}"
    return RenderedPrompt(text, spec.mode, tuple(hits))


def save_index(index: SearchIndex, destination: str | Path) -> None:
    """Persist an index as JSON, versioned with its embedder fingerprint."""
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "fingerprint": index.fingerprint,
        "items": [
            {
                "id": item.id,
                "text": item.text,
                "kind": item.kind,
                "provenance": item.provenance,
                "vector": vector.tolist(),
            }
            for item, vector in zip(index.items, index.vectors)
        ],
    }
    Path(destination).write_text(
        json.dumps(payload, ensure_ascii=False), encoding="utf-8"
    )


def load_index(source: str | Path) -> SearchIndex:
    p = Path(source)
    try:
        payload = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"index file is not valid JSON: {exc.msg}") from None
    if not isinstance(payload, dict) or payload.get("format") != INDEX_FORMAT:
        raise FormatError(f"expected {INDEX_FORMAT} payload")
    if payload.get("version") != INDEX_VERSION:
        raise FormatError(f"unsupported index version {payload.get('version')!r}")
    raw_items = payload.get("items", [])
    if not raw_items:
        raise EmptyIndex("index file holds no items")
    items = tuple(
        IndexItem(row["id"], row["text"], row["kind"], row.get("provenance", "cckg"))
        for row in raw_items
    )
    vectors = np.asarray([row["vector"] for row in raw_items], dtype=np.float64)
    return SearchIndex(items, vectors, str(payload.get("fingerprint", "")))
