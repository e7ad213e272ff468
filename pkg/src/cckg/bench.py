"""Downstream task runners: MCQA accuracy, sentence-completion similarity,
story generation, judge scoring, and annotator agreement.

Runners are augmentation-aware and fault tolerant: a failed item is
recorded and the run continues. Records keep the full prompt and raw
model text so every metric can be re-derived after the fact.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .augment import AugmentationSpec, RenderedPrompt, assemble_prompt
from .embedding import cosine
from .gateway import BackendRejected, BackendUnavailable, Gateway, GenerationRequest, render
from .kb import FormatError
from .prompts import JUDGE_TEMPLATES, STORY_GENERATION

log = logging.getLogger(__name__)

__all__ = [
    "BenchRecord",
    "CompletionItem",
    "CompletionRecord",
    "CompletionResult",
    "DegenerateInput",
    "EmptyDataset",
    "JudgeDimension",
    "JudgeScore",
    "McqaItem",
    "McqaResult",
    "StoryRecord",
    "UnscorableResponse",
    "export_completion_pairs",
    "format_mcqa_prompt",
    "judge_story",
    "load_completion_items",
    "load_mcqa_items",
    "parse_choice",
    "pearson",
    "run_completion",
    "run_mcqa",
    "run_storygen",
    "save_stories",
]

CHOICE_LETTERS = ("A", "B", "C")

_CHOICE_TOKEN = re.compile(r"\b([ABCabc123])\b")
_INTEGER = re.compile(r"\d+")
_BACKEND_ERRORS = (BackendUnavailable, BackendRejected)


class EmptyDataset(ValueError):
    pass


class UnscorableResponse(ValueError):
    pass


class DegenerateInput(ValueError):
    pass


@dataclass(frozen=True)
class McqaItem:
    """One multiple-choice item: three candidates, exactly one correct."""

    id: str
    question: str
    choices: tuple[str, str, str]
    gold: int

    def __post_init__(self):
        if len(self.choices) != 3 or not all(c.strip() for c in self.choices):
            raise ValueError(f"item {self.id}: exactly 3 non-empty choices required")
        if self.gold not in (0, 1, 2):
            raise ValueError(f"item {self.id}: gold index must be 0, 1, or 2")


@dataclass(frozen=True)
class CompletionItem:
    id: str
    stem: str
    reference: str

    def __post_init__(self):
        if not self.reference.strip():
            raise ValueError(f"item {self.id}: reference must be non-empty")


def format_mcqa_prompt(item: McqaItem) -> str:
    lines = [f"Question: {item.question}"]
    lines += [f"{letter}. {choice}" for letter, choice in zip(CHOICE_LETTERS, item.choices)]
    lines.append("")
    lines.append("Respond with the letter of the correct choice (A, B, or C).")
    return "\n".join(lines)


def parse_choice(raw: str) -> int | None:
    """First standalone A/B/C (any case) or 1/2/3 in the text, as an index.

    Deterministic by position; returns None when no standalone token
    occurs. Known limitation: an early stray standalone letter wins, e.g.
    "Both A and B" parses as choice 0.
    """
    m = _CHOICE_TOKEN.search(raw)
    if m is None:
        return None
    token = m.group(1).upper()
    return CHOICE_LETTERS.index(token) if token in CHOICE_LETTERS else int(token) - 1


@dataclass(frozen=True)
class BenchRecord:
    """Everything needed to audit one MCQA judgement."""

    item_id: str
    mode: str
    prompt: str
    raw_text: str
    parsed: int | None
    gold: int
    verdict: str
    error: str = ""

    def __post_init__(self):
        expected = (
            "unparsed"
            if self.parsed is None
            else ("correct" if self.parsed == self.gold else "incorrect")
        )
        if self.verdict != expected:
            raise ValueError(
                f"stored verdict {self.verdict!r} disagrees with recomputed {expected!r}"
            )


def _verdict(parsed: int | None, gold: int) -> str:
    if parsed is None:
        return "unparsed"
    return "correct" if parsed == gold else "incorrect"


@dataclass
class McqaResult:
    accuracy: float
    records: list[BenchRecord]
    unparsed: int


def run_mcqa(
    items: Sequence[McqaItem],
    spec: AugmentationSpec,
    gateway: Gateway,
    embedder=None,
    temperature: float = 0.0,
) -> McqaResult:
    """Answer every item and score accuracy; unparsed answers count as wrong."""
    if not items:
        raise EmptyDataset("no MCQA items")
    records: list[BenchRecord] = []
    correct = 0
    unparsed = 0
    for item in items:
        prompt = assemble_prompt(format_mcqa_prompt(item), spec, item.question, embedder)
        raw, error = "", ""
        try:
            result = gateway.generate(
                GenerationRequest(prompt.text, temperature=temperature, tag=f"mcqa:{item.id}")
            )
            raw = result.text
        except _BACKEND_ERRORS as exc:
            error = str(exc)
            log.warning("mcqa item %s failed: %s", item.id, exc)
        parsed = parse_choice(raw) if not error else None
        verdict = _verdict(parsed, item.gold)
        if verdict == "correct":
            correct += 1
        if verdict == "unparsed":
            unparsed += 1
        records.append(
            BenchRecord(item.id, spec.mode.value, prompt.text, raw, parsed, item.gold, verdict, error)
        )
    return McqaResult(correct / len(items), records, unparsed)


@dataclass(frozen=True)
class CompletionRecord:
    item_id: str
    mode: str
    prompt: str
    generated: str
    reference: str
    similarity: float | None
    error: str = ""


@dataclass
class CompletionResult:
    mean_similarity: float
    records: list[CompletionRecord]
    skipped: int


def run_completion(
    items: Sequence[CompletionItem],
    spec: AugmentationSpec,
    gateway: Gateway,
    embedder,
    temperature: float = 0.0,
) -> CompletionResult:
    """Generate a completion per stem and score cosine against the reference.

    Empty generations and backend failures are recorded as error items and
    excluded from the mean; the skipped count reports them.
    """
    if not items:
        raise EmptyDataset("no completion items")
    records: list[CompletionRecord] = []
    scores: list[float] = []
    skipped = 0
    for item in items:
        prompt = assemble_prompt(item.stem, spec, item.stem, embedder)
        generated, error = "", ""
        try:
            result = gateway.generate(
                GenerationRequest(
                    prompt.text, temperature=temperature, tag=f"completion:{item.id}"
                )
            )
            generated = result.text
        except _BACKEND_ERRORS as exc:
            error = str(exc)
            log.warning("completion item %s failed: %s", item.id, exc)
        if not error and not generated.strip():
            error = "empty generation"
        similarity: float | None = None
        if not error:
            [gen_vec, ref_vec] = embedder.embed([generated, item.reference])
            similarity = cosine(gen_vec, ref_vec)
            scores.append(similarity)
        else:
            skipped += 1
        records.append(
            CompletionRecord(
                item.id, spec.mode.value, prompt.text, generated, item.reference, similarity, error
            )
        )
    mean = float(np.mean(scores)) if scores else 0.0
    return CompletionResult(mean, records, skipped)


@dataclass(frozen=True)
class StoryRecord:
    subtopic: str
    country: str
    language: str
    mode: str
    prompt: str
    text: str
    retrieved: tuple[tuple[str, float], ...] = ()
    error: str = ""


def run_storygen(
    subtopics: Sequence[str],
    country: str,
    language: str,
    spec: AugmentationSpec,
    gateway: Gateway,
    embedder=None,
    temperature: float = 1.0,
) -> list[StoryRecord]:
    """One story per subtopic, with optional retrieved context prefixed."""
    if not subtopics:
        raise EmptyDataset("no subtopics to write stories for")
    stories: list[StoryRecord] = []
    for subtopic in subtopics:
        task = render(
            STORY_GENERATION,
            {"SUBTOPIC": subtopic, "COUNTRY": country, "LANGUAGE": language},
        )
        prompt: RenderedPrompt = assemble_prompt(task, spec, subtopic, embedder)
        text, error = "", ""
        try:
            result = gateway.generate(
                GenerationRequest(prompt.text, temperature=temperature, tag=f"story:{subtopic}")
            )
            text = result.text
        except _BACKEND_ERRORS as exc:
            error = str(exc)
            log.warning("story for %r failed: %s", subtopic, exc)
        stories.append(
            StoryRecord(
                subtopic, country, language, spec.mode.value,
                prompt.text, text, prompt.retrieved, error,
            )
        )
    return stories


def save_stories(stories: Sequence[StoryRecord], destination: str | Path) -> None:
    with Path(destination).open("w", encoding="utf-8") as fh:
        for s in stories:
            record = {
                "subtopic": s.subtopic,
                "country": s.country,
                "language": s.language,
                "mode": s.mode,
                "prompt": s.prompt,
                "text": s.text,
                "retrieved": [[i, score] for i, score in s.retrieved],
                "error": s.error,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


class JudgeDimension(Enum):
    CULTURAL_RELEVANCE = "cultural_relevance"
    FLUENCY = "fluency"
    COHERENCE = "coherence"


@dataclass(frozen=True)
class JudgeScore:
    dimension: JudgeDimension
    value: int
    raw_text: str

    def __post_init__(self):
        if not 1 <= self.value <= 10:
            raise ValueError(f"judge score must be in 1..10, got {self.value}")


def story_tag(dimension: JudgeDimension, story: str) -> str:
    digest = hashlib.sha1(story.encode("utf-8")).hexdigest()[:12]
    return f"judge:{dimension.value}:{digest}"


def judge_story(
    story: str,
    country: str,
    dimension: JudgeDimension,
    gateway: Gateway,
    tag: str | None = None,
) -> JudgeScore:
    """Score a story 1..10 on one dimension via the judging model.

    The first integer token in 1..10 wins; digits are required, so a
    spelled-out score is unscorable. Responses holding several numbers log
    a warning.
    """
    prompt = render(JUDGE_TEMPLATES[dimension.value], {"story": story, "country": country})
    result = gateway.generate(
        GenerationRequest(prompt, temperature=0.0, tag=tag or story_tag(dimension, story))
    )
    tokens = _INTEGER.findall(result.text)
    if len(tokens) > 1:
        log.warning("judge response holds %d numbers; taking the first in range", len(tokens))
    for token in tokens:
        value = int(token)
        if 1 <= value <= 10:
            return JudgeScore(dimension, value, result.text)
    raise UnscorableResponse(f"no integer in 1..10 found in {result.text[:80]!r}")


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Standard sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise DegenerateInput("pearson needs two equal-length 1-d sequences")
    if x.size < 2:
        raise DegenerateInput("pearson needs at least 2 observations")
    xd = x - x.mean()
    yd = y - y.mean()
    sx = float(np.sqrt(np.dot(xd, xd)))
    sy = float(np.sqrt(np.dot(yd, yd)))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInput("pearson is undefined for zero-variance input")
    return float(np.dot(xd, yd)) / (sx * sy)


def load_mcqa_items(path: str | Path) -> list[McqaItem]:
    """Read MCQA items from JSON lines of {id, question, choices, gold}."""
    items: list[McqaItem] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                items.append(
                    McqaItem(
                        str(obj["id"]), str(obj["question"]),
                        tuple(str(c) for c in obj["choices"]), int(obj["gold"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"invalid MCQA record: {exc}", line_no) from None
    return items


def load_completion_items(path: str | Path) -> list[CompletionItem]:
    """Read completion items from JSON lines of {id, stem, reference}."""
    items: list[CompletionItem] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                items.append(
                    CompletionItem(str(obj["id"]), str(obj["stem"]), str(obj["reference"]))
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"invalid completion record: {exc}", line_no) from None
    return items


def export_completion_pairs(
    records: Sequence[CompletionRecord], destination: str | Path
) -> None:
    """Write (generated, reference) pairs for external scoring tools."""
    with Path(destination).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {"id": r.item_id, "generated": r.generated, "reference": r.reference},
                    ensure_ascii=False,
                )
                + "\n"
            )
