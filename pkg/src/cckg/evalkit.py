"""Human-evaluation logistics: annotation batches, gold-standard quality
control, and label aggregation.

A batch samples paths (seeded), expands them into their deduplicated
constituent assertions, and embeds exactly five hidden gold units at
seeded positions. Annotators label assertions for correctness (COR) and
cultural relevance (CR) and paths for logical path coherence (LPC) with
binary yes/no answers. A sheet passes quality control only when at least
four of the five gold units match their expected labels on every
applicable criterion; gold units never enter the aggregated percentages.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import random
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .augment import render_assertion, render_path
from .kb import FormatError
from .pathing import PathRecord

log = logging.getLogger(__name__)

__all__ = [
    "AggregateReport",
    "AnnotationBatch",
    "AnnotationUnit",
    "Criterion",
    "GOLD_UNITS_PER_BATCH",
    "IncompleteSheet",
    "InsufficientGold",
    "InsufficientPaths",
    "LabelSheet",
    "NoPassingSheets",
    "QcResult",
    "aggregate_labels",
    "applicable_criteria",
    "export_batch",
    "export_keyfile",
    "load_batch",
    "load_gold_pool",
    "load_label_sheet",
    "qc_gate",
    "sample_for_annotation",
]

GOLD_UNITS_PER_BATCH = 5
GOLD_MATCHES_REQUIRED = 4


class InsufficientPaths(ValueError):
    pass


class InsufficientGold(ValueError):
    pass


class IncompleteSheet(ValueError):
    pass


class NoPassingSheets(ValueError):
    pass


class Criterion(Enum):
    CR = "CR"  # culturally specific to the target country
    COR = "COR"  # valid actions and the relation between them
    LPC = "LPC"  # logically structured, contradiction-free chain


#: Annotator-facing criterion descriptions, shipped with every export.
CRITERION_DESCRIPTIONS = {
    Criterion.COR: "Correctness: are both actions valid and does the relation accurately represent their connection?",
    Criterion.CR: "Cultural relevance: is the assertion culturally specific to the target country, as opposed to universal or broadly cross-cultural?",
    Criterion.LPC: "Logical path coherence: does the sequence of actions form a coherent, logically structured, and contradiction-free inferential chain?",
}


def applicable_criteria(kind: str) -> tuple[Criterion, ...]:
    """CR/COR attach to assertion units, LPC to path units."""
    if kind == "assertion":
        return (Criterion.CR, Criterion.COR)
    if kind == "path":
        return (Criterion.LPC,)
    raise ValueError(f"unknown unit kind {kind!r}")


@dataclass(frozen=True)
class AnnotationUnit:
    unit_id: str
    kind: str  # "assertion" | "path"
    text: str
    is_gold: bool = False
    expected: Mapping[Criterion, bool] | None = None

    def __post_init__(self):
        applicable = applicable_criteria(self.kind)
        if self.is_gold:
            if self.expected is None or set(self.expected) != set(applicable):
                raise ValueError(
                    f"gold unit {self.unit_id} must carry expected labels for "
                    f"{[c.value for c in applicable]}"
                )
        elif self.expected is not None:
            raise ValueError(f"non-gold unit {self.unit_id} carries expected labels")


@dataclass(frozen=True)
class AnnotationBatch:
    id: str
    country: str
    language: str
    seed: int
    units: tuple[AnnotationUnit, ...]

    @property
    def gold_units(self) -> tuple[AnnotationUnit, ...]:
        return tuple(u for u in self.units if u.is_gold)

    @property
    def scored_units(self) -> tuple[AnnotationUnit, ...]:
        return tuple(u for u in self.units if not u.is_gold)

    @property
    def eval_assertion_count(self) -> int:
        """Assertion units up for evaluation (gold units excluded)."""
        return sum(1 for u in self.scored_units if u.kind == "assertion")


def sample_for_annotation(
    paths: Sequence[PathRecord],
    n_paths: int,
    gold_pool: Sequence[AnnotationUnit],
    seed: int,
) -> AnnotationBatch:
    """Draw a seeded annotation batch from enumerated paths.

    Samples `n_paths` paths uniformly, lists each path unit followed by its
    not-yet-seen assertions (shared assertions appear once), then embeds
    five gold units from the pool at seeded positions. Equal seeds yield
    identical batches.
    """
    if len(paths) < n_paths:
        raise InsufficientPaths(f"need {n_paths} paths, have {len(paths)}")
    golds_available = [u for u in gold_pool if u.is_gold]
    if len(golds_available) < GOLD_UNITS_PER_BATCH:
        raise InsufficientGold(
            f"need {GOLD_UNITS_PER_BATCH} gold units, have {len(golds_available)}"
        )
    rng = random.Random(seed)
    chosen = rng.sample(list(paths), n_paths)
    units: list[AnnotationUnit] = []
    seen_assertions: set[str] = set()
    for p in chosen:
        units.append(AnnotationUnit(f"path:{p.id}", "path", render_path(p)))
        for a in p.assertions:
            if a.id in seen_assertions:
                continue
            seen_assertions.add(a.id)
            units.append(AnnotationUnit(f"asrt:{a.id}", "assertion", render_assertion(a)))
    golds = rng.sample(golds_available, GOLD_UNITS_PER_BATCH)
    positions = sorted(rng.sample(range(len(units) + GOLD_UNITS_PER_BATCH), GOLD_UNITS_PER_BATCH))
    mixed: list[AnnotationUnit] = []
    unit_iter = iter(units)
    gold_iter = iter(golds)
    for slot in range(len(units) + GOLD_UNITS_PER_BATCH):
        mixed.append(next(gold_iter) if slot in positions else next(unit_iter))

    country = language = ""
    for p in chosen:
        country = p.assertions[0].meta.country
        language = p.assertions[0].meta.language
        break
    digest = hashlib.sha1(
        "|".join([country, language, str(seed)] + [u.unit_id for u in mixed]).encode("utf-8")
    ).hexdigest()[:12]
    return AnnotationBatch(digest, country, language, seed, tuple(mixed))


@dataclass(frozen=True)
class LabelSheet:
    """One annotator's yes/no answers over a batch."""

    annotator_id: str
    batch_id: str
    labels: Mapping[str, Mapping[Criterion, bool]]


@dataclass(frozen=True)
class QcResult:
    passed: bool
    matched_gold: int


def _sheet_label(sheet: LabelSheet, unit: AnnotationUnit, criterion: Criterion) -> bool:
    unit_labels = sheet.labels.get(unit.unit_id)
    if unit_labels is None or criterion not in unit_labels:
        raise IncompleteSheet(
            f"sheet {sheet.annotator_id} misses {criterion.value} for unit {unit.unit_id}"
        )
    return unit_labels[criterion]


def qc_gate(sheet: LabelSheet, batch: AnnotationBatch) -> QcResult:
    """Pass iff at least four of the five gold units match on all applicable criteria."""
    for unit in batch.units:
        for criterion in applicable_criteria(unit.kind):
            _sheet_label(sheet, unit, criterion)  # completeness check
    matched = 0
    for unit in batch.gold_units:
        assert unit.expected is not None
        if all(
            _sheet_label(sheet, unit, criterion) == unit.expected[criterion]
            for criterion in applicable_criteria(unit.kind)
        ):
            matched += 1
    return QcResult(matched >= GOLD_MATCHES_REQUIRED, matched)


@dataclass
class AggregateReport:
    """Percent-yes per criterion, per annotator and averaged across them."""

    per_annotator: dict[Criterion, dict[str, float]] = field(default_factory=dict)
    mean: dict[Criterion, float] = field(default_factory=dict)


def aggregate_labels(
    sheets: Sequence[LabelSheet], batch: AnnotationBatch
) -> AggregateReport:
    """Tally percent-yes over the scored (non-gold) units of passing sheets."""
    passing = []
    for sheet in sheets:
        if qc_gate(sheet, batch).passed:
            passing.append(sheet)
        else:
            log.warning("sheet %s failed gold-standard QC; excluded", sheet.annotator_id)
    if not passing:
        raise NoPassingSheets("no sheet passed gold-standard quality control")
    report = AggregateReport()
    for criterion in Criterion:
        units = [u for u in batch.scored_units if criterion in applicable_criteria(u.kind)]
        if not units:
            continue
        by_annotator: dict[str, float] = {}
        for sheet in passing:
            yes = sum(1 for u in units if _sheet_label(sheet, u, criterion))
            by_annotator[sheet.annotator_id] = 100.0 * yes / len(units)
        report.per_annotator[criterion] = by_annotator
        report.mean[criterion] = sum(by_annotator.values()) / len(by_annotator)
    return report


def _clean_cell(text: str) -> str:
    return " ".join(text.split())


def export_batch(batch: AnnotationBatch, destination: str | Path) -> None:
    """Write the annotator-facing sheet: tab-separated, criteria blank to fill.

    Gold units are indistinguishable from scored units here; their expected
    labels live only in the keyfile.
    """
    with Path(destination).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t")
        writer.writerow(["unit_id", "kind", "text"] + [c.value for c in Criterion])
        for unit in batch.units:
            applicable = applicable_criteria(unit.kind)
            cells = ["" if c in applicable else "-" for c in Criterion]
            writer.writerow([unit.unit_id, unit.kind, _clean_cell(unit.text)] + cells)


def export_keyfile(batch: AnnotationBatch, destination: str | Path) -> None:
    """Write the hidden gold answer key (never handed to annotators)."""
    payload = {
        "batch_id": batch.id,
        "country": batch.country,
        "language": batch.language,
        "seed": batch.seed,
        "golds": {
            unit.unit_id: {c.value: unit.expected[c] for c in applicable_criteria(unit.kind)}
            for unit in batch.gold_units
            if unit.expected is not None
        },
    }
    Path(destination).write_text(json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8")


def load_gold_pool(path: str | Path) -> list[AnnotationUnit]:
    """Read gold units from JSON lines of {unit_id, kind, text, labels}."""
    units: list[AnnotationUnit] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                expected = {Criterion(k): bool(v) for k, v in obj["labels"].items()}
                units.append(
                    AnnotationUnit(
                        str(obj["unit_id"]), str(obj["kind"]), str(obj["text"]),
                        is_gold=True, expected=expected,
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"invalid gold record: {exc}", line_no) from None
    return units


def load_batch(batch_path: str | Path, keyfile_path: str | Path) -> AnnotationBatch:
    """Reconstruct a batch from its exported sheet plus the gold keyfile."""
    try:
        key = json.loads(Path(keyfile_path).read_text(encoding="utf-8"))
        golds = {
            unit_id: {Criterion(c): bool(v) for c, v in labels.items()}
            for unit_id, labels in key["golds"].items()
        }
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid keyfile: {exc}") from None
    units: list[AnnotationUnit] = []
    with Path(batch_path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or header[:3] != ["unit_id", "kind", "text"]:
            raise FormatError("batch header must start with unit_id, kind, text", 1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            unit_id, kind, text = row[0], row[1], row[2]
            try:
                units.append(
                    AnnotationUnit(
                        unit_id, kind, text,
                        is_gold=unit_id in golds,
                        expected=golds.get(unit_id),
                    )
                )
            except ValueError as exc:
                raise FormatError(str(exc), line_no) from None
    return AnnotationBatch(
        str(key.get("batch_id", "")), str(key.get("country", "")),
        str(key.get("language", "")), int(key.get("seed", 0)), tuple(units),
    )


def load_label_sheet(
    path: str | Path, batch: AnnotationBatch, annotator_id: str | None = None
) -> LabelSheet:
    """Read back a filled annotator sheet; annotator id defaults to the file stem.

    Cells must hold literal yes/no (case-insensitive) for applicable
    criteria; "-" and blank cells are treated as missing and will fail the
    completeness check in qc_gate.
    """
    p = Path(path)
    labels: dict[str, dict[Criterion, bool]] = {}
    with p.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or header[:3] != ["unit_id", "kind", "text"]:
            raise FormatError("sheet header must start with unit_id, kind, text", 1)
        criteria = []
        for name in header[3:]:
            try:
                criteria.append(Criterion(name))
            except ValueError:
                raise FormatError(f"unknown criterion column {name!r}", 1) from None
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            unit_id = row[0]
            cells = row[3 : 3 + len(criteria)]
            unit_labels: dict[Criterion, bool] = {}
            for criterion, cell in zip(criteria, cells):
                value = cell.strip().lower()
                if value in ("", "-"):
                    continue
                if value not in ("yes", "no"):
                    raise FormatError(
                        f"cell for {criterion.value} must be yes or no, got {cell!r}", line_no
                    )
                unit_labels[criterion] = value == "yes"
            labels[unit_id] = unit_labels
    return LabelSheet(annotator_id or p.stem, batch.id, labels)
