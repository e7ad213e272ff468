"""Enumerate inferential chains through a hand-built graph.

Paths grow depth-first from the heads of initial assertions and stop
when they cannot reach an unvisited action, giving maximal node-simple
chains per subtopic.
"""

from cckg.augment import render_path
from cckg.kb import Action, Assertion, AssertionMeta, KnowledgeBase, RelationKind
from cckg.pathing import PathLimits, enumerate_simple_paths, select_sources


def edge(head, relation, tail, subtopic="Wedding food"):
    return Assertion(
        Action(head),
        RelationKind.parse(relation),
        Action(tail),
        AssertionMeta(country="Indonesia", language="English",
                      topic="Wedding", subtopic=subtopic),
    )


def run_demo():
    print("=== Enumerating inferential chains ===\n")
    kb = KnowledgeBase("Indonesia", "English")
    for e in [
        edge("families agree on the wedding date", "xNext", "plan the wedding menu"),
        edge("plan the wedding menu", "xNext", "order beef for rendang"),
        edge("plan the wedding menu", "oNext", "relatives volunteer to cook"),
        edge("order beef for rendang", "xNext", "cook overnight in coconut milk"),
        edge("relatives volunteer to cook", "xNext", "cook overnight in coconut milk"),
        edge("cook overnight in coconut milk", "oNext", "guests praise the rendang"),
    ]:
        kb.insert(e)

    sources = select_sources(kb)
    print(f"Source actions: {[a.text for a in sources]}\n")

    result = enumerate_simple_paths(kb, sources, PathLimits(max_depth=10))
    print(f"Found {len(result.paths)} maximal simple paths"
          f"{' (truncated)' if result.truncated else ''}:\n")
    for i, path in enumerate(result.paths, start=1):
        print(f"--- path {i} ({len(path)} steps) ---")
        print(render_path(path))
        print()


if __name__ == "__main__":
    run_demo()
