"""Run the downstream task harnesses against a scripted model.

Covers multiple-choice accuracy (unparsed answers count as wrong),
sentence-completion similarity, story generation, and judge scoring on a
1-10 scale.
"""

from cckg.augment import AugmentationMode, AugmentationSpec
from cckg.bench import (
    CompletionItem,
    JudgeDimension,
    McqaItem,
    judge_story,
    run_completion,
    run_mcqa,
    run_storygen,
    story_tag,
)
from cckg.embedding import HashedBagEmbedder
from cckg.gateway import Gateway, ScriptedBackend

BASE = AugmentationSpec(AugmentationMode.BASE)


def gateway_with(responses):
    return Gateway(ScriptedBackend(responses), sleep=lambda _s: None)


def run_demo():
    print("=== Multiple-choice accuracy ===\n")
    items = [
        McqaItem("q1", "What is eaten at breakfast?", ("bubur ayam", "roast beef", "pancakes"), 0),
        McqaItem("q2", "Who is greeted first?", ("the youngest", "the elders", "nobody"), 1),
        McqaItem("q3", "What drink welcomes guests?", ("cola", "coffee", "sweet tea"), 2),
        McqaItem("q4", "What is shared at selamatan?", ("rice dishes", "cards", "books"), 0),
    ]
    responses = {
        "mcqa:q1": "A",
        "mcqa:q2": "The answer is B.",
        "mcqa:q3": "3",
        "mcqa:q4": "hmm, hard to say",  # unparsable -> counted wrong
    }
    result = run_mcqa(items, BASE, gateway_with(responses))
    for record in result.records:
        print(f"  {record.item_id}: {record.verdict} (raw: {record.raw_text!r})")
    print(f"accuracy = {result.accuracy:.2f}, unparsed = {result.unparsed}\n")

    print("=== Sentence-completion similarity ===\n")
    embedder = HashedBagEmbedder()
    completion_items = [
        CompletionItem("c1", "After the market, the family", "cooks breakfast together"),
        CompletionItem("c2", "Guests are welcomed with", "sweet tea"),
    ]
    completion_responses = {
        "completion:c1": "cooks lunch together",
        "completion:c2": "sweet tea",
    }
    scores = run_completion(completion_items, BASE, gateway_with(completion_responses), embedder)
    for record in scores.records:
        print(f"  {record.item_id}: similarity {record.similarity:.4f}")
    print(f"mean similarity = {scores.mean_similarity:.4f}\n")

    print("=== Story generation and judging ===\n")
    story_text = (
        "Before sunrise, Sari followed her grandmother to the market to choose "
        "the ripest bananas for the family's breakfast porridge."
    )
    stories = run_storygen(
        ["Breakfast"], "Indonesia", "English", BASE,
        gateway_with({"story:Breakfast": story_text}),
    )
    print(f"story ({stories[0].subtopic}): {stories[0].text}\n")

    judge_responses = {
        story_tag(JudgeDimension.CULTURAL_RELEVANCE, story_text): "8 - clearly grounded",
        story_tag(JudgeDimension.FLUENCY, story_text): "9/10",
        story_tag(JudgeDimension.COHERENCE, story_text): "Score: 8",
    }
    judge_gateway = gateway_with(judge_responses)
    for dimension in JudgeDimension:
        score = judge_story(story_text, "Indonesia", dimension, judge_gateway)
        print(f"  {dimension.value}: {score.value}/10")


if __name__ == "__main__":
    run_demo()
