"""Regenerate the committed fixture files.

Run from the repository root:

    python3 tests/fixtures/generate_fixtures.py

The scripted-backend response tags embed content-derived assertion ids,
so this script computes them with the package itself, writes the fixture
files, then replays the full pipeline against them and asserts the
expected graph shape before anything is committed.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent.parent
sys.path.insert(0, str(ROOT / "src"))

from cckg.construction import PipelineConfig, run_pipeline  # noqa: E402
from cckg.embedding import HashedBagEmbedder  # noqa: E402
from cckg.gateway import Gateway, ScriptedBackend  # noqa: E402
from cckg.kb import Action, Assertion, RelationKind  # noqa: E402
from cckg.pathing import enumerate_simple_paths, select_sources  # noqa: E402

TAXONOMY = {"Food": ["Breakfast"], "Habits": ["Greetings habits"]}


def _aid(head: str, relation: str, tail: str) -> str:
    a = Assertion(Action(head), RelationKind.parse(relation), Action(tail))
    return a.id


def _arr(*records) -> str:
    return json.dumps(list(records))


def pipeline_responses() -> dict[str, str]:
    r: dict[str, str] = {}

    r["init:Breakfast"] = _arr(
        {"if": "go to the morning market", "relation": "xNext", "then": "buy fresh ingredients"},
        {"if": "cook fried rice", "relation": "xNeed", "then": "heat the wok"},
        {"if": "serve breakfast to the family", "relation": "oNext", "then": "family eats together"},
        {"if": "offer sweet tea", "relation": "xEffect", "then": "guests feel welcome"},
        {"if": "finish the meal", "relation": "oEffect", "then": "elders give thanks"},
    )
    r["init:Greetings habits"] = _arr(
        {"if": "meet an elder", "relation": "xNext", "then": "bow slightly"},
        {"if": "shake hands softly", "relation": "xNext", "then": "touch hand to chest"},
        {"if": "greet a neighbor", "relation": "zzz", "then": "smile warmly"},
    )

    b1 = _aid("go to the morning market", "xNext", "buy fresh ingredients")
    b3 = _aid("serve breakfast to the family", "oNext", "family eats together")
    g1 = _aid("meet an elder", "xNext", "bow slightly")
    g2 = _aid("shake hands softly", "xNext", "touch hand to chest")

    # round 1
    r[f"mid:Breakfast:{b1}"] = _arr(
        {"if": "go to the morning market", "relation": "xNext", "then": "greet the vendors"},
        {"if": "greet the vendors", "relation": "xNext", "then": "buy fresh ingredients"},
    )
    r[f"fwd:Breakfast:{b1}"] = _arr(
        {"if": "buy fresh ingredients", "relation": "xNext", "then": "Cook Fried Rice"},
        {"if": "buy fresh ingredients", "relation": "oNext", "then": "vendors pack the produce"},
        {"if": "buy fresh ingredients", "relation": "xEffect", "then": "feels prepared"},
    )
    r[f"mid:Breakfast:{b3}"] = "[]"
    r[f"fwd:Breakfast:{b3}"] = _arr(
        {"if": "family eats together", "relation": "xNext", "then": "share stories from yesterday"},
        {"if": "family eats together", "relation": "oNext", "then": "children wash the dishes"},
    )
    r[f"mid:Greetings habits:{g1}"] = _arr(
        {"if": "meet an elder", "relation": "xNext", "then": "bow slightly"},
    )
    r[f"fwd:Greetings habits:{g1}"] = _arr(
        {"if": "bow slightly", "relation": "xNext", "then": "ask about the family"},
    )
    r[f"mid:Greetings habits:{g2}"] = "[]"
    r[f"fwd:Greetings habits:{g2}"] = _arr(
        {"if": "touch hand to chest", "relation": "oNext", "then": "return the gesture"},
        {"if": "wrong head text", "relation": "xNext", "then": "never kept"},
    )

    f1 = _aid("buy fresh ingredients", "oNext", "vendors pack the produce")
    f2 = _aid("family eats together", "xNext", "share stories from yesterday")
    f3 = _aid("family eats together", "oNext", "children wash the dishes")
    f4 = _aid("bow slightly", "xNext", "ask about the family")
    f5 = _aid("touch hand to chest", "oNext", "return the gesture")

    # round 2
    r[f"mid:Breakfast:{f1}"] = "[]"
    r[f"fwd:Breakfast:{f1}"] = _arr(
        {"if": "vendors pack the produce", "relation": "xNext", "then": "carry the basket home"},
    )
    r[f"mid:Breakfast:{f2}"] = "[]"
    r[f"fwd:Breakfast:{f2}"] = _arr(
        {"if": "share stories from yesterday", "relation": "xNext", "then": "plan the day ahead"},
    )
    r[f"mid:Breakfast:{f3}"] = _arr(
        {"if": "family eats together", "relation": "oNext", "then": "children clear the table"},
        {"if": "children clear the table", "relation": "oNext", "then": "children wash the dishes"},
    )
    r[f"fwd:Breakfast:{f3}"] = "[]"
    r[f"mid:Greetings habits:{f4}"] = "[]"
    r[f"fwd:Greetings habits:{f4}"] = _arr(
        {"if": "ask about the family", "relation": "xNext", "then": "exchange small gifts"},
    )
    r[f"mid:Greetings habits:{f5}"] = "[]"
    r[f"fwd:Greetings habits:{f5}"] = "[]"

    f6 = _aid("vendors pack the produce", "xNext", "carry the basket home")
    f7 = _aid("share stories from yesterday", "xNext", "plan the day ahead")
    f8 = _aid("ask about the family", "xNext", "exchange small gifts")

    # round 3
    r[f"mid:Breakfast:{f6}"] = "[]"
    r[f"fwd:Breakfast:{f6}"] = "[]"
    r[f"mid:Breakfast:{f7}"] = "[]"
    r[f"fwd:Breakfast:{f7}"] = _arr(
        {"if": "plan the day ahead", "relation": "xNext", "then": "leave for school and work"},
    )
    r[f"mid:Greetings habits:{f8}"] = "[]"
    r[f"fwd:Greetings habits:{f8}"] = "[]"

    return r


def write_pipeline_fixture() -> None:
    out = HERE / "pipeline"
    out.mkdir(exist_ok=True)
    responses = pipeline_responses()
    with (out / "responses.jsonl").open("w", encoding="utf-8") as fh:
        for tag, text in responses.items():
            fh.write(json.dumps({"tag": tag, "response_text": text}, ensure_ascii=False) + "\n")
    (out / "taxonomy.json").write_text(json.dumps(TAXONOMY, indent=2), encoding="utf-8")
    config = {
        "country": "Indonesia",
        "language": "English",
        "taxonomy": "taxonomy.json",
        "depth": 3,
        "temperature": 1.0,
        "tau": 0.8,
        "frontier_cap": 6,
        "seed": 7,
        "backend": "mock",
        "fixtures": "responses.jsonl",
        "embedder": {"backend": "local-fallback", "dimension": 256},
    }
    (out / "config.json").write_text(json.dumps(config, indent=2), encoding="utf-8")

    # replay and assert the expected shape before shipping
    cfg = PipelineConfig(
        country="Indonesia", language="English", taxonomy=TAXONOMY,
        depth=3, seed=7,
    )
    gateway = Gateway(ScriptedBackend(responses), sleep=lambda _s: None)
    kb, report = run_pipeline(cfg, gateway, HashedBagEmbedder())
    by_iter = {it.iteration: it for it in report.iterations}
    assert len(report.iterations) == 4, report.summary()
    assert by_iter[0].inserted == 7, report.summary()
    assert by_iter[0].dropped == 1, report.summary()
    assert by_iter[0].frontier_size == 4, report.summary()
    assert by_iter[1].inserted == 8, report.summary()
    assert by_iter[1].duplicates == 1, report.summary()
    assert by_iter[1].replaced == 1, report.summary()
    assert by_iter[1].dropped == 2, report.summary()
    assert by_iter[1].frontier_size == 5, report.summary()
    assert by_iter[2].inserted == 5, report.summary()
    assert by_iter[2].frontier_size == 3, report.summary()
    assert by_iter[3].inserted == 1, report.summary()
    assert len(kb) == 21, len(kb)
    replaced_edge = _aid("buy fresh ingredients", "xNext", "cook fried rice")
    assert kb.get(replaced_edge) is not None
    enumeration = enumerate_simple_paths(kb, select_sources(kb))
    assert not enumeration.truncated
    assert len(enumeration.paths) == 12, len(enumeration.paths)
    print(f"pipeline fixture ok: {len(kb)} edges, {len(enumeration.paths)} paths")


def write_bench_fixtures() -> None:
    out = HERE / "bench"
    out.mkdir(exist_ok=True)
    mcqa_items = [
        {"id": "q1", "question": "What do families in Indonesia commonly eat for breakfast?",
         "choices": ["fried rice", "roast dinner", "apple pie"], "gold": 0},
        {"id": "q2", "question": "What follows a morning market visit?",
         "choices": ["a nap", "cooking with fresh ingredients", "watching films"], "gold": 1},
        {"id": "q3", "question": "How do younger people greet elders?",
         "choices": ["a loud shout", "ignoring them", "a slight bow"], "gold": 2},
        {"id": "q4", "question": "What is shared over breakfast?",
         "choices": ["stories", "receipts", "maps"], "gold": 0},
    ]
    with (out / "mcqa.jsonl").open("w", encoding="utf-8") as fh:
        for item in mcqa_items:
            fh.write(json.dumps(item, ensure_ascii=False) + "\n")
    mcqa_responses = {
        "mcqa:q1": "The answer is A.",
        "mcqa:q2": "2",
        "mcqa:q3": "C. a slight bow",
        "mcqa:q4": "banana",
    }
    completion_items = [
        {"id": "c1", "stem": "After the market, the family usually",
         "reference": "cooks a warm breakfast together"},
        {"id": "c2", "stem": "Guests are welcomed with",
         "reference": "sweet tea"},
    ]
    with (out / "completion.jsonl").open("w", encoding="utf-8") as fh:
        for item in completion_items:
            fh.write(json.dumps(item, ensure_ascii=False) + "\n")
    completion_responses = {
        "completion:c1": "cooks a warm lunch together",
        "completion:c2": "sweet tea",
    }
    responses = {**mcqa_responses, **completion_responses}
    with (out / "responses.jsonl").open("w", encoding="utf-8") as fh:
        for tag, text in responses.items():
            fh.write(json.dumps({"tag": tag, "response_text": text}, ensure_ascii=False) + "\n")
    print("bench fixtures ok")


def write_gold_pool() -> None:
    out = HERE / "eval"
    out.mkdir(exist_ok=True)
    golds = [
        {"unit_id": "gold-a1", "kind": "assertion",
         "text": "If x greets an elder, x will bow slightly.",
         "labels": {"CR": True, "COR": True}},
        {"unit_id": "gold-a2", "kind": "assertion",
         "text": "If x throws rice at the moon, x gets a new bicycle.",
         "labels": {"CR": False, "COR": False}},
        {"unit_id": "gold-a3", "kind": "assertion",
         "text": "If x buys groceries, x will want to cook.",
         "labels": {"CR": False, "COR": True}},
        {"unit_id": "gold-a4", "kind": "assertion",
         "text": "If x serves sweet tea, guests feel welcome.",
         "labels": {"CR": True, "COR": True}},
        {"unit_id": "gold-p1", "kind": "path",
         "text": "1. If x goes to the market, x will buy ingredients.\n2. If x buys ingredients, x will cook breakfast.",
         "labels": {"LPC": True}},
        {"unit_id": "gold-p2", "kind": "path",
         "text": "1. If x sleeps, x will wake. 2. If x flies to the sun, x cools down.",
         "labels": {"LPC": False}},
    ]
    with (out / "gold_pool.jsonl").open("w", encoding="utf-8") as fh:
        for g in golds:
            fh.write(json.dumps(g, ensure_ascii=False) + "\n")
    print("gold pool ok")


if __name__ == "__main__":
    write_pipeline_fixture()
    write_bench_fixtures()
    write_gold_pool()
