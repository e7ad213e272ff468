"""Prompt templates shipped with the toolkit.

Placeholders are `{name}` markers; each template's required set is derived
from its body. The generation templates append an explicit output-format
instruction (a JSON array of {"if", "relation", "then"} objects) so model
responses can be parsed deterministically.
"""

from .gateway import PromptTemplate

__all__ = [
    "FORWARD_EXPANSION",
    "INITIAL_GENERATION",
    "INTERMEDIATE_EXPANSION",
    "JUDGE_TEMPLATES",
    "STEREOTYPE_AUDIT",
    "STORY_GENERATION",
]

_RELATION_GUIDE = """\
Each assertion links two short action phrases through exactly one relation:
- xNext: what x would likely want to do after the action
- xEffect: what effect the action has on x
- xNeed: what x needs to do before the action
- oNext: what others would likely want to do after the action
- oEffect: what effect the action has on others"""

_FORMAT_RULES = """\
Respond with a JSON array and nothing else. Each element must be an object
with the keys "if", "relation", and "then", for example:
[{"if": "buys groceries", "relation": "xNext", "then": "want to cook"}]"""

INITIAL_GENERATION = PromptTemplate(
    id="initial-generation",
    body=f"""\
You are documenting everyday cultural practices as commonsense knowledge.

Generate culturally specific if-then assertions about the subtopic
"{{sub_topic}}" as it is practiced in {{location}}. Write every action
phrase in {{language}}. Focus on practices, sequences, and expectations
that are specific to {{location}} rather than universal.

{_RELATION_GUIDE}

{_FORMAT_RULES}""",
)

INTERMEDIATE_EXPANSION = PromptTemplate(
    id="expansion-intermediate",
    body=f"""\
Consider this cultural commonsense assertion: "{{initial_event}}".

Decompose it into the finer-grained steps that connect "{{init_action}}"
to "{{init_knowledge}}". The steps must form a single chain: the first
"if" must be exactly "{{init_action}}", the last "then" must be exactly
"{{init_knowledge}}", and every "then" must equal the next step's "if".
If there are no meaningful intermediate steps, respond with [].

{_RELATION_GUIDE}

{_FORMAT_RULES}""",
)

FORWARD_EXPANSION = PromptTemplate(
    id="expansion-forward",
    body=f"""\
Consider this cultural commonsense assertion: "{{initial_event}}".

Starting from "{{init_action}}", events have led to "{{init_knowledge}}".
Generate new assertions describing what happens after "{{init_knowledge}}"
in this cultural context. Every new assertion must start from it: each
"if" must be exactly "{{init_knowledge}}", and the relation must be xNext
or oNext. If nothing culturally meaningful follows, respond with [].

{_RELATION_GUIDE}

{_FORMAT_RULES}""",
)

STORY_GENERATION = PromptTemplate(
    id="story-generation",
    body="""\
Write a short story in {LANGUAGE} about {SUBTOPIC} in {COUNTRY}. The story
should authentically reflect the traditions, customs, values, and social
norms of {COUNTRY}, stay grounded in everyday life, and be at most four
paragraphs long. Respond with the story only.""",
)

_JUDGE_RULES = """\
Respond with a single integer between 1 and 10, where 1 is the worst and
10 is the best, optionally followed by a one-sentence justification."""

JUDGE_CULTURAL_RELEVANCE = PromptTemplate(
    id="judge-cultural-relevance",
    body=f"""\
You are evaluating a short story. Rate how accurately it reflects the
traditions, customs, values, and social norms of {{country}}.

Story:
{{story}}

{_JUDGE_RULES}""",
)

JUDGE_FLUENCY = PromptTemplate(
    id="judge-fluency",
    body=f"""\
You are evaluating a short story written for readers in {{country}}. Rate
its fluency: grammatical correctness, sentence structure, vocabulary, and
overall readability.

Story:
{{story}}

{_JUDGE_RULES}""",
)

JUDGE_COHERENCE = PromptTemplate(
    id="judge-coherence",
    body=f"""\
You are evaluating a short story written for readers in {{country}}. Rate
its coherence: the logical flow, clarity, and consistency of events and
character actions.

Story:
{{story}}

{_JUDGE_RULES}""",
)

JUDGE_TEMPLATES = {
    "cultural_relevance": JUDGE_CULTURAL_RELEVANCE,
    "fluency": JUDGE_FLUENCY,
    "coherence": JUDGE_COHERENCE,
}

# Shipped for completeness of the prompt inventory; no pipeline stage runs it.
STEREOTYPE_AUDIT = PromptTemplate(
    id="stereotype-audit",
    body="""\
Assess whether the text contains overly generalized, stereotypical, or
unfair assumptions about individuals within the target culture, including
but not limited to those based on gender roles, religion, ethnicity,
regional affiliation, or socioeconomic class. Answer Yes, No, or Unsure,
followed by a brief justification.

Text:
{story}""",
)
