"""End-to-end completion: prompt, route, fetch, emit one prediction per record.

Per-record failures never abort a batch; they are encoded in the
prediction's status (routing_error / retrieval_error) with empty object
lists so a run always covers every input row. Records are processed by a
bounded worker pool and reassembled in input order, so output bytes do not
depend on the parallelism level.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .dataset import ObjectKind, Relation, TripleRecord
from .routing import Router, RoutingError, RoutingInput, route
from .wikidata import ClientError, EndpointConfig, WikidataClient

STATUS_OK = "ok"
STATUS_ROUTING_ERROR = "routing_error"
STATUS_RETRIEVAL_ERROR = "retrieval_error"


@dataclass(frozen=True)
class Prediction:
    subject_entity: str
    subject_entity_id: str
    relation: Relation
    object_entities: tuple[str, ...]
    object_entities_id: tuple[str, ...]
    routed_template: int | None
    status: str
    error: str | None = None


@dataclass
class RunReport:
    total: int = 0
    ok: int = 0
    routing_errors: int = 0
    retrieval_errors: int = 0
    per_relation_counts: dict[str, int] = field(default_factory=dict)
    cache_hits: int = 0
    wall_time_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "ok": self.ok,
            "routing_errors": self.routing_errors,
            "retrieval_errors": self.retrieval_errors,
            "per_relation_counts": self.per_relation_counts,
            "cache_hits": self.cache_hits,
            "wall_time_seconds": self.wall_time_seconds,
        }


def _failure(record: TripleRecord, status: str, template_id: int | None, error: str) -> Prediction:
    return Prediction(
        subject_entity=record.subject_entity,
        subject_entity_id=record.subject_entity_id,
        relation=record.relation,
        object_entities=(),
        object_entities_id=(),
        routed_template=template_id,
        status=status,
        error=error,
    )


def complete_record(record: TripleRecord, router: Router, client) -> Prediction:
    """Complete one record. An empty object set is a legitimate null answer
    and still counts as ok; only routing/retrieval failures get error status."""
    try:
        template_id = route(RoutingInput.from_record(record), router)
    except RoutingError as exc:
        return _failure(record, STATUS_ROUTING_ERROR, None, str(exc))
    try:
        objects = client.fetch_objects(template_id, record.subject_entity_id)
    except ClientError as exc:
        return _failure(record, STATUS_RETRIEVAL_ERROR, template_id, str(exc))

    if record.relation.object_kind is ObjectKind.NUMERIC:
        labels = (objects.number,) if objects.number is not None else ()
        ids: tuple[str, ...] = ()
    else:
        labels = tuple(ref.label for ref in objects.entities)
        ids = tuple(ref.qid for ref in objects.entities)
    return Prediction(
        subject_entity=record.subject_entity,
        subject_entity_id=record.subject_entity_id,
        relation=record.relation,
        object_entities=labels,
        object_entities_id=ids,
        routed_template=template_id,
        status=STATUS_OK,
    )


def run(
    records: list[TripleRecord],
    router: Router,
    *,
    client=None,
    config: EndpointConfig | None = None,
    parallelism: int = 1,
) -> tuple[list[Prediction], RunReport]:
    """Complete a whole dataset.

    Pass either a ready client (any object with ``fetch_objects``) or an
    EndpointConfig to build one from. Configuration problems (bad config,
    replay mode with an empty cache) raise before the first record; from
    then on failures only ever show up as per-record statuses.
    """
    if parallelism < 1:
        raise ValueError(f"parallelism must be >= 1, got {parallelism}")
    if (client is None) == (config is None):
        raise ValueError("pass exactly one of client or config")
    if client is None:
        client = WikidataClient(config)
        client.verify_replay_ready()

    started = time.monotonic()
    predictions: list[Prediction | None] = [None] * len(records)
    if records:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = {
                pool.submit(complete_record, record, router, client): index
                for index, record in enumerate(records)
            }
            for future, index in futures.items():
                predictions[index] = future.result()

    report = RunReport(total=len(records), wall_time_seconds=time.monotonic() - started)
    for prediction in predictions:
        report.per_relation_counts[prediction.relation.value] = (
            report.per_relation_counts.get(prediction.relation.value, 0) + 1
        )
        if prediction.status == STATUS_OK:
            report.ok += 1
        elif prediction.status == STATUS_ROUTING_ERROR:
            report.routing_errors += 1
        else:
            report.retrieval_errors += 1
    stats = getattr(client, "stats", None)
    if stats is not None:
        report.cache_hits = stats.cache_hits
    return predictions, report
