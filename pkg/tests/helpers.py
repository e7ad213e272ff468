"""Shared fixture builders and independent oracles used across test modules.

The oracles deliberately re-derive expected values through a different
route than the code under test (recursive enumeration, exhaustive sort,
from-scratch arithmetic) and must stay independent of the implementations
they check.
"""

from __future__ import annotations

import hashlib
import math
import re

from cckg.kb import (
    Action,
    Assertion,
    AssertionMeta,
    KnowledgeBase,
    Provenance,
    RelationKind,
)


def make_assertion(
    head: str,
    relation: RelationKind | str,
    tail: str,
    *,
    source: Provenance = Provenance.INITIAL,
    iteration: int = 0,
    parent_id: str | None = None,
    subtopic: str = "Breakfast",
    topic: str = "Food",
    country: str = "Indonesia",
    language: str = "English",
) -> Assertion:
    if isinstance(relation, str):
        relation = RelationKind.parse(relation)
    return Assertion(
        Action(head),
        relation,
        Action(tail),
        AssertionMeta(
            country=country,
            language=language,
            topic=topic,
            subtopic=subtopic,
            iteration=iteration,
            source=source,
            parent_id=parent_id,
        ),
    )


def kb_from_edges(edges, country="Indonesia", language="English") -> KnowledgeBase:
    kb = KnowledgeBase(country, language)
    for e in edges:
        kb.insert(e)
    return kb


def brute_force_maximal_paths(kb: KnowledgeBase, source: Action, subtopic: str | None = None):
    """Independent recursive enumerator of maximal simple paths.

    Returns a list of tuples of assertion ids; no depth or budget limits,
    intended for small graphs only.
    """
    by_head: dict[str, list[Assertion]] = {}
    for e in kb.assertions:
        if subtopic is None or e.meta.subtopic == subtopic:
            by_head.setdefault(e.head.norm, []).append(e)
    found: list[tuple[str, ...]] = []

    def recurse(node: str, visited: set[str], acc: list[Assertion]) -> None:
        extended = False
        for edge in by_head.get(node, []):
            if edge.tail.norm not in visited:
                extended = True
                recurse(edge.tail.norm, visited | {edge.tail.norm}, acc + [edge])
        if not extended and acc:
            found.append(tuple(a.id for a in acc))

    recurse(source.norm, {source.norm}, [])
    return found


def brute_force_ranking(texts_by_id: dict[str, str], query: str, embed_one) -> list[str]:
    """Exhaustive cosine sort oracle: ids by descending score, ties by id."""
    qv = embed_one(query)
    scored = [(item_id, float(qv @ embed_one(text))) for item_id, text in texts_by_id.items()]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return [item_id for item_id, _ in scored]


def reference_bag_vector(text: str, dimension: int = 256) -> list[float]:
    """From-scratch reimplementation of the documented fallback embedding.

    Tokens are Unicode word matches after casefold; each maps to
    bucket = first 4 digest bytes mod dimension, sign = parity of byte 4,
    accumulated then scaled to unit length. Pure-Python, no numpy.
    """
    tokens = re.findall(r"\w+", text.casefold())
    if not tokens:
        tokens = [text.casefold().strip()]
    vec = [0.0] * dimension
    for token in tokens:
        digest = hashlib.sha1(token.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "big") % dimension
        vec[bucket] += 1.0 if digest[4] % 2 == 0 else -1.0
    norm = math.sqrt(sum(c * c for c in vec))
    return [c / norm for c in vec]


def reference_cosine(a: str, b: str, dimension: int = 256) -> float:
    va = reference_bag_vector(a, dimension)
    vb = reference_bag_vector(b, dimension)
    return sum(x * y for x, y in zip(va, vb))
