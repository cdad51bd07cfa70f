"""Loading, validating, splitting and writing the triple-completion JSONL files.

Each dataset line is one JSON object with the keys SubjectEntity,
SubjectEntityID, ObjectEntities, ObjectEntitiesID and Relation. The two
object lists are parallel (label[i] belongs to id[i]) and are absent on
unlabeled test input. For the numeric relation the "ids" are decimal
strings rather than QIDs, and prediction rows may carry the number in
ObjectEntities with an empty id list.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)

QID_RE = re.compile(r"Q[1-9][0-9]*")
NUMBER_RE = re.compile(r"[0-9]+(\.[0-9]+)?")

PROMPT_FORMAT = "What Z completes the relationship {relation} for {subject}?"


class ObjectKind(Enum):
    ENTITY = "entity"
    NUMERIC = "numeric"


class Relation(Enum):
    """The five dataset relations, with the object shape each one implies."""

    COUNTRY_LAND_BORDERS_COUNTRY = ("countryLandBordersCountry", ObjectKind.ENTITY, True, False)
    PERSON_HAS_CITY_OF_DEATH = ("personHasCityOfDeath", ObjectKind.ENTITY, True, False)
    SERIES_HAS_NUMBER_OF_EPISODES = ("seriesHasNumberOfEpisodes", ObjectKind.NUMERIC, False, False)
    AWARD_WON_BY = ("awardWonBy", ObjectKind.ENTITY, False, True)
    COMPANY_TRADES_AT_STOCK_EXCHANGE = ("companyTradesAtStockExchange", ObjectKind.ENTITY, True, False)

    def __new__(cls, name: str, kind: ObjectKind, nullable: bool, high_cardinality: bool):
        member = object.__new__(cls)
        member._value_ = name
        member.object_kind = kind
        member.nullable = nullable
        member.high_cardinality = high_cardinality
        return member

    def __str__(self) -> str:
        return self.value


class DatasetError(ValueError):
    """Raised for malformed dataset lines; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class TripleRecord:
    """One dataset row. Gold object lists are empty tuples on unlabeled rows,
    with ``gold_present`` distinguishing "no gold given" from "gold is null"."""

    subject_entity: str
    subject_entity_id: str
    relation: Relation
    object_entities: tuple[str, ...] = ()
    object_entities_id: tuple[str, ...] = ()
    gold_present: bool = True

    @property
    def gold_ids(self) -> frozenset[str]:
        return frozenset(self.object_entities_id)


def is_qid(text: str) -> bool:
    return isinstance(text, str) and QID_RE.fullmatch(text) is not None


def _require_str(obj: dict, key: str, line_number: int | None) -> str:
    if key not in obj:
        raise DatasetError(f"missing mandatory key {key!r}", line_number)
    value = obj[key]
    if not isinstance(value, str):
        raise DatasetError(f"key {key!r} must be a string, got {type(value).__name__}", line_number)
    return value


def _string_list(obj: dict, key: str, line_number: int | None) -> list[str]:
    value = obj[key]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise DatasetError(f"key {key!r} must be a list of strings", line_number)
    return value


def parse_record(line: str, line_number: int | None = None) -> TripleRecord:
    """Parse one JSONL line into a validated TripleRecord.

    ObjectEntities/ObjectEntitiesID are optional as a pair; a row carrying
    only one of them is rejected. Duplicate objects (same id) are dropped,
    keeping the first occurrence, because scoring is set-based.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed JSON ({exc.msg})", line_number) from exc
    if not isinstance(obj, dict):
        raise DatasetError("line is not a JSON object", line_number)

    subject = _require_str(obj, "SubjectEntity", line_number)
    subject_id = _require_str(obj, "SubjectEntityID", line_number)
    relation_name = _require_str(obj, "Relation", line_number)

    if not is_qid(subject_id):
        raise DatasetError(f"SubjectEntityID {subject_id!r} does not match the QID pattern", line_number)
    try:
        relation = Relation(relation_name)
    except ValueError:
        raise DatasetError(f"unknown relation {relation_name!r}", line_number) from None

    has_labels = "ObjectEntities" in obj
    has_ids = "ObjectEntitiesID" in obj
    if has_labels != has_ids:
        raise DatasetError("ObjectEntities and ObjectEntitiesID must be present together", line_number)
    if not has_ids:
        return TripleRecord(subject, subject_id, relation, gold_present=False)

    labels = _string_list(obj, "ObjectEntities", line_number)
    ids = _string_list(obj, "ObjectEntitiesID", line_number)

    numeric = relation.object_kind is ObjectKind.NUMERIC
    if len(labels) != len(ids):
        # Numeric prediction rows carry the literal in ObjectEntities only.
        if not (numeric and not ids):
            raise DatasetError(
                f"ObjectEntities ({len(labels)}) and ObjectEntitiesID ({len(ids)}) differ in length",
                line_number,
            )

    if numeric:
        for value in ids or labels:
            if NUMBER_RE.fullmatch(value) is None:
                raise DatasetError(f"numeric object {value!r} is not a non-negative decimal", line_number)
    else:
        for value in ids:
            if not is_qid(value):
                raise DatasetError(f"object id {value!r} does not match the QID pattern", line_number)

    if ids:
        seen: dict[str, str] = {}
        for obj_id, label in zip(ids, labels):
            seen.setdefault(obj_id, label)
        ids = list(seen)
        labels = [seen[obj_id] for obj_id in ids]

    return TripleRecord(subject, subject_id, relation, tuple(labels), tuple(ids))


def serialize_record(record: TripleRecord) -> str:
    """Render a record as one JSONL line with the canonical key order.
    Inverse of parse_record for every valid record."""
    obj: dict = {
        "SubjectEntity": record.subject_entity,
        "SubjectEntityID": record.subject_entity_id,
    }
    if record.gold_present:
        obj["ObjectEntities"] = list(record.object_entities)
        obj["ObjectEntitiesID"] = list(record.object_entities_id)
    obj["Relation"] = record.relation.value
    return json.dumps(obj, ensure_ascii=False)


def load_dataset(path: str | Path) -> list[TripleRecord]:
    """Read a JSONL dataset, preserving file order. Blank lines are rejected
    (one object per line); an entirely empty file yields [] with a warning."""
    path = Path(path)
    records = []
    with path.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if line.strip() == "":
                raise DatasetError("blank line", line_number)
            records.append(parse_record(line, line_number))
    if not records:
        logger.warning("dataset %s is empty", path)
    logger.info("loaded %d records from %s", len(records), path)
    return records


def split_dataset(
    records: list[TripleRecord], ratio: float, seed: int
) -> tuple[list[TripleRecord], list[TripleRecord]]:
    """Randomly partition records into (train, holdout) with |train| =
    round(ratio * N). The same seed always produces the same partition;
    each part keeps the records in their original file order."""
    if not records:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    indices = list(range(len(records)))
    random.Random(seed).shuffle(indices)
    n_train = round(ratio * len(records))
    train_idx = sorted(indices[:n_train])
    holdout_idx = sorted(indices[n_train:])
    return [records[i] for i in train_idx], [records[i] for i in holdout_idx]


def build_prompt(record: TripleRecord) -> str:
    """The routing question for one record. The subject label and relation
    name are substituted; "Z" stays verbatim as the unknown-object marker."""
    return PROMPT_FORMAT.format(relation=record.relation.value, subject=record.subject_entity)


def write_predictions(predictions: Iterable, path: str | Path) -> None:
    """Write rows (anything with the TripleRecord field names) as JSONL,
    preserving input order. Output parses back via parse_record."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for pred in predictions:
            record = TripleRecord(
                subject_entity=pred.subject_entity,
                subject_entity_id=pred.subject_entity_id,
                relation=pred.relation,
                object_entities=tuple(pred.object_entities),
                object_entities_id=tuple(pred.object_entities_id),
            )
            handle.write(serialize_record(record) + "\n")
