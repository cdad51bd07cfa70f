"""Training pairs from the completion pipeline's JSONL dataset files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .protocol import RELATION_TEMPLATE_IDS, build_prompt


@dataclass(frozen=True)
class TrainingPair:
    prompt: str
    target: str  # decimal template-id string, "1".."5"


@dataclass(frozen=True)
class DatasetRow:
    subject: str
    relation: str


def load_rows(path: str | Path) -> list[DatasetRow]:
    """Read (subject, relation) pairs from a dataset JSONL file, in order."""
    rows = []
    with Path(path).open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                raise ValueError(f"{path}: blank line {line_number}")
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {line_number}: {exc.msg}") from exc
            try:
                subject = obj["SubjectEntity"]
                relation = obj["Relation"]
            except KeyError as exc:
                raise ValueError(f"{path}: line {line_number}: missing key {exc}") from None
            if relation not in RELATION_TEMPLATE_IDS:
                raise ValueError(f"{path}: line {line_number}: unknown relation {relation!r}")
            rows.append(DatasetRow(subject=subject, relation=relation))
    return rows


def build_training_pairs(rows: list[DatasetRow]) -> list[TrainingPair]:
    """One pair per row, order-preserving: the routing question and the
    template id the rule mapping assigns its relation."""
    return [
        TrainingPair(
            prompt=build_prompt(row.subject, row.relation),
            target=str(RELATION_TEMPLATE_IDS[row.relation]),
        )
        for row in rows
    ]


def load_training_pairs(path: str | Path) -> list[TrainingPair]:
    return build_training_pairs(load_rows(path))


def write_pairs(pairs: list[TrainingPair], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(json.dumps({"prompt": pair.prompt, "target": pair.target}) + "\n")
