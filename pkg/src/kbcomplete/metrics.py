"""Set-overlap precision/recall/F1 scoring for completed triples.

Scores compare object-key sets per (subject, relation) instance: QIDs for
entity relations, canonicalized decimal strings for the numeric one.
Empty-set conventions: an empty prediction scores precision 1, an empty
gold set scores recall 1, and predicting anything against empty gold
scores precision 0. F1 is the harmonic mean, defined as 0 when both
precision and recall are 0. The overall row averages over all instances
(instance-weighted), never over the per-relation rows, and the zero-object
row averages the gold-empty subset only.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Iterable, Sequence

from .dataset import ObjectKind, Relation


@dataclass(frozen=True)
class PairScore:
    precision: float
    recall: float
    f1: float
    relation: Relation
    gold_empty: bool


@dataclass(frozen=True)
class ScoreRow:
    """Mean precision/recall/F1 over ``count`` instances."""

    precision: float
    recall: float
    f1: float
    count: int


@dataclass(frozen=True)
class ScoreReport:
    per_relation: dict[Relation, ScoreRow]
    overall: ScoreRow
    zero_object: ScoreRow | None  # None when no instance has empty gold

    def to_dict(self) -> dict:
        def row(r: ScoreRow) -> dict:
            return {"precision": r.precision, "recall": r.recall, "f1": r.f1, "count": r.count}

        return {
            "per_relation": {rel.value: row(r) for rel, r in self.per_relation.items()},
            "overall": row(self.overall),
            "zero_object": None if self.zero_object is None else row(self.zero_object),
        }


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def pair_scores(pred_ids: Iterable[str], gold_ids: Iterable[str], relation: Relation) -> PairScore:
    """Score one prediction/gold pair of object-key sets."""
    pred = frozenset(pred_ids)
    gold = frozenset(gold_ids)
    if not pred:
        precision = 1.0
        recall = 1.0 if not gold else 0.0
    elif not gold:
        precision = 0.0
        recall = 1.0
    else:
        hits = len(pred & gold)
        precision = hits / len(pred)
        recall = hits / len(gold)
    return PairScore(precision, recall, f1_score(precision, recall), relation, not gold)


def _mean_row(pairs: Sequence[PairScore]) -> ScoreRow:
    n = len(pairs)
    return ScoreRow(
        precision=sum(p.precision for p in pairs) / n,
        recall=sum(p.recall for p in pairs) / n,
        f1=sum(p.f1 for p in pairs) / n,
        count=n,
    )


def relation_report(pairs: Sequence[PairScore]) -> dict[Relation, ScoreRow]:
    """Per-relation means, in Relation declaration order. Relations with no
    pairs are omitted rather than zero-filled."""
    report = {}
    for relation in Relation:
        subset = [p for p in pairs if p.relation is relation]
        if subset:
            report[relation] = _mean_row(subset)
    return report


def zero_object_report(pairs: Sequence[PairScore]) -> ScoreRow | None:
    """Means over instances whose gold set is empty; None when there are none."""
    subset = [p for p in pairs if p.gold_empty]
    if not subset:
        return None
    return _mean_row(subset)


def overall_report(pairs: Sequence[PairScore]) -> ScoreReport:
    """The full report. Overall values are the arithmetic means over every
    instance, so relations contribute in proportion to their counts."""
    if not pairs:
        raise ValueError("cannot score an empty pair list")
    return ScoreReport(
        per_relation=relation_report(pairs),
        overall=_mean_row(pairs),
        zero_object=zero_object_report(pairs),
    )


def canonical_number(text: str) -> str:
    """Canonical spelling of a decimal string, so "08" and "8" (and "8.0")
    compare equal as object keys."""
    try:
        value = Decimal(text.strip())
    except InvalidOperation:
        raise ValueError(f"{text!r} is not a decimal number") from None
    if value == value.to_integral_value():
        return str(int(value))
    return str(value.normalize())


def object_key_set(
    relation: Relation, entities: Sequence[str], entity_ids: Sequence[str]
) -> frozenset[str]:
    """The comparable key set for one row: entity QIDs, or canonical decimal
    strings for the numeric relation (falling back to the label column for
    prediction rows that carry the literal there)."""
    if relation.object_kind is ObjectKind.NUMERIC:
        values = entity_ids if entity_ids else entities
        return frozenset(canonical_number(v) for v in values)
    return frozenset(entity_ids)


def format_report(report: ScoreReport) -> str:
    """Aligned text table: one row per relation, the instance-weighted
    Average row, then the zero-object row."""
    rows: list[tuple[str, str, str, str, str]] = [("Relation", "Precision", "Recall", "F1-score", "Count")]

    def fmt(row_name: str, row: ScoreRow) -> tuple[str, str, str, str, str]:
        return (row_name, f"{row.precision:.4f}", f"{row.recall:.4f}", f"{row.f1:.4f}", str(row.count))

    for relation, row in report.per_relation.items():
        rows.append(fmt(relation.value, row))
    rows.append(fmt("Average", report.overall))
    if report.zero_object is None:
        rows.append(("Zero-object", "n/a", "n/a", "n/a", "0"))
    else:
        rows.append(fmt("Zero-object", report.zero_object))

    widths = [max(len(r[col]) for r in rows) for col in range(5)]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * width for width in widths))
    return "\n".join(lines)
