"""Build a small cultural knowledge graph end to end, offline.

A scripted backend plays the role of the language model: every request
tag maps to a canned response, so the run is deterministic and needs no
network. The same pipeline runs against a real endpoint by swapping in
an HttpChatBackend.
"""

import json

from cckg.construction import PipelineConfig, run_pipeline
from cckg.embedding import HashedBagEmbedder
from cckg.gateway import Gateway, ScriptedBackend
from cckg.kb import Action, Assertion, RelationKind, compute_stats


def aid(head, relation, tail):
    return Assertion(Action(head), RelationKind.parse(relation), Action(tail)).id


def build_responses():
    """Canned model outputs keyed by request tag (stage:subtopic[:parent-id])."""
    seed = [
        {"if": "visit the morning market", "relation": "xNext", "then": "buy fresh spices"},
        {"if": "cook rendang", "relation": "xNeed", "then": "buy fresh spices"},
        {"if": "serve the meal", "relation": "oNext", "then": "guests compliment the cook"},
    ]
    p1 = aid("visit the morning market", "xNext", "buy fresh spices")
    p2 = aid("serve the meal", "oNext", "guests compliment the cook")
    responses = {
        "init:Traditional foods and beverages": json.dumps(seed),
        f"mid:Traditional foods and beverages:{p1}": json.dumps(
            [
                {"if": "visit the morning market", "relation": "xNext", "then": "greet the spice vendor"},
                {"if": "greet the spice vendor", "relation": "xNext", "then": "buy fresh spices"},
            ]
        ),
        f"fwd:Traditional foods and beverages:{p1}": json.dumps(
            [
                {"if": "buy fresh spices", "relation": "xNext", "then": "Cook Rendang"},
                {"if": "buy fresh spices", "relation": "oNext", "then": "vendor wraps the bundle"},
            ]
        ),
        f"mid:Traditional foods and beverages:{p2}": "[]",
        f"fwd:Traditional foods and beverages:{p2}": json.dumps(
            [
                {"if": "guests compliment the cook", "relation": "xNext", "then": "offer second helpings"},
            ]
        ),
    }
    # leaves of round 1 get empty continuations in round 2
    for head, rel, tail in [
        ("buy fresh spices", "oNext", "vendor wraps the bundle"),
        ("guests compliment the cook", "xNext", "offer second helpings"),
    ]:
        cid = aid(head, rel, tail)
        responses[f"mid:Traditional foods and beverages:{cid}"] = "[]"
        responses[f"fwd:Traditional foods and beverages:{cid}"] = "[]"
    return responses


def run_demo():
    print("=== Building a cultural knowledge graph ===\n")
    cfg = PipelineConfig(
        country="Indonesia",
        language="English",
        taxonomy={"Food": ["Traditional foods and beverages"]},
        depth=2,
        seed=11,
    )
    gateway = Gateway(ScriptedBackend(build_responses()), sleep=lambda _s: None)
    kb, report = run_pipeline(cfg, gateway, HashedBagEmbedder())

    print(report.summary())
    print("Edges in the graph:")
    for a in kb.assertions:
        marker = {"initial": " ", "intermediate": "~", "forward": ">"}[a.meta.source.value]
        print(f"  {marker} {a.head.text} --{a.relation.canonical}--> {a.tail.text}")

    stats = compute_stats(kb)
    print(f"\n{stats.unique_nodes} unique actions, {stats.total_assertions} assertions.")
    print("Note: the continuation 'Cook Rendang' was canonicalized onto the")
    print("existing action 'cook rendang' instead of spawning a near-duplicate.")


if __name__ == "__main__":
    run_demo()
