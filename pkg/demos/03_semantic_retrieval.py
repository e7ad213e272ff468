"""Semantic retrieval and augmented prompt assembly.

Assertions and paths are rendered into sentences, embedded once into an
immutable index, and retrieved by exact cosine scan. Retrieved context is
prefixed to task prompts in a frozen block layout, so augmented prompts
are reproducible bit for bit.
"""

from cckg.augment import (
    AugmentationMode,
    AugmentationSpec,
    assemble_prompt,
    build_index,
    items_from_assertions,
    items_from_paths,
    top_k,
)
from cckg.embedding import HashedBagEmbedder
from cckg.kb import Action, Assertion, RelationKind
from cckg.pathing import PathRecord


def a(head, relation, tail):
    return Assertion(Action(head), RelationKind.parse(relation), Action(tail))


ASSERTIONS = [
    a("visit the night market", "xNext", "try satay skewers"),
    a("host a selamatan", "oNext", "neighbors bring rice dishes"),
    a("serve sweet tea", "xEffect", "guests feel welcome"),
    a("celebrate lebaran", "xNeed", "prepare ketupat in advance"),
    a("greet the elders first", "oEffect", "family feels respected"),
    a("share nasi tumpeng", "oNext", "everyone takes the rice cone tip last"),
]

PATHS = [
    PathRecord.from_assertions(
        "Breakfast",
        [
            a("wake before sunrise", "xNext", "walk to the market"),
            a("walk to the market", "xNext", "buy warm bubur ayam"),
            a("buy warm bubur ayam", "oNext", "share breakfast with family"),
        ],
    )
]


def run_demo():
    embedder = HashedBagEmbedder()
    index = build_index(
        items_from_assertions(ASSERTIONS) + items_from_paths(PATHS), embedder
    )
    print(f"=== Index of {len(index)} items ({index.fingerprint}) ===\n")

    query = "how are guests welcomed at a meal"
    print(f"Query: {query!r}\n")
    for item_id, score in top_k(index, query, k=3, embedder=embedder, kind="assertion"):
        print(f"  {score:+.4f}  {index.item(item_id).text}")

    task = "Question: What do hosts serve first?\nAnswer briefly."
    print("\n--- base mode ---")
    print(assemble_prompt(task, AugmentationSpec(AugmentationMode.BASE), query).text)

    print("\n--- 5-shot assertion mode ---")
    spec = AugmentationSpec(AugmentationMode.ASSERTIONS, index=index)
    print(assemble_prompt(task, spec, query, embedder).text)

    print("\n--- 1-shot path mode ---")
    spec = AugmentationSpec(AugmentationMode.PATH, index=index)
    print(assemble_prompt(task, spec, "morning food routine", embedder).text)


if __name__ == "__main__":
    run_demo()
