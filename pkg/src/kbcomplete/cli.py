"""Command-line entry point.

Subcommands: split, route, complete, evaluate, report. Exit codes are a
stable contract: 0 success, 1 I/O or data failure, 2 usage/configuration
error, 3 evaluation-join failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .dataset import (
    DatasetError,
    TripleRecord,
    load_dataset,
    serialize_record,
    split_dataset,
    write_predictions,
)
from .metrics import ScoreReport, ScoreRow, format_report, object_key_set, overall_report, pair_scores
from .pipeline import run
from .routing import Router, RoutingError, RoutingInput, parse_router_spec, route
from .wikidata import ConfigError, EndpointConfig, ReplayMissError

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_JOIN = 3

USER_AGENT_ENV = "KBCOMPLETE_USER_AGENT"


def default_user_agent() -> str:
    contact = os.environ.get(USER_AGENT_ENV, "").strip()
    agent = f"kbcomplete/{__version__}"
    return f"{agent} ({contact})" if contact else agent


def _write_lines(path: Path, lines: list[str]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for line in lines:
            handle.write(line + "\n")


def cmd_split(args: argparse.Namespace) -> int:
    try:
        records = load_dataset(args.input)
        train, holdout = split_dataset(records, args.ratio, args.seed)
    except ValueError as exc:
        if isinstance(exc, DatasetError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _write_lines(Path(args.train_out), [serialize_record(r) for r in train])
    _write_lines(Path(args.holdout_out), [serialize_record(r) for r in holdout])
    print(f"split {len(records)} records into {len(train)} train / {len(holdout)} holdout", file=sys.stderr)
    return EXIT_OK


def _build_router(spec: str) -> Router:
    return parse_router_spec(spec)


def _route_records(records: list[TripleRecord], router: Router, parallelism: int):
    def route_one(record: TripleRecord):
        try:
            return route(RoutingInput.from_record(record), router), None
        except RoutingError as exc:
            return None, str(exc)

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(route_one, records))


def cmd_route(args: argparse.Namespace) -> int:
    try:
        router = _build_router(args.router)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        records = load_dataset(args.input)
    except (DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    results = _route_records(records, router, args.parallelism)
    lines = []
    errors = 0
    for record, (template_id, error) in zip(records, results):
        row = {
            "SubjectEntity": record.subject_entity,
            "SubjectEntityID": record.subject_entity_id,
            "Relation": record.relation.value,
            "TemplateId": template_id,
            "Status": "ok" if error is None else "routing_error",
        }
        if error is not None:
            errors += 1
        lines.append(json.dumps(row, ensure_ascii=False))
    _write_lines(Path(args.output), lines)
    report = {"total": len(records), "routing_errors": errors}
    print(json.dumps(report), file=sys.stderr)
    return EXIT_OK


def cmd_complete(args: argparse.Namespace) -> int:
    try:
        router = _build_router(args.router)
        config = EndpointConfig(
            endpoint_url=args.endpoint,
            user_agent=default_user_agent(),
            mode=args.mode,
            cache_dir=Path(args.cache_dir) if args.cache_dir else None,
            min_request_interval=args.min_interval,
        )
    except (ValueError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        records = load_dataset(args.input)
    except (DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        predictions, report = run(records, router, config=config, parallelism=args.parallelism)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        write_predictions(predictions, args.output)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    report_json = json.dumps(report.to_dict())
    if args.report:
        Path(args.report).write_text(report_json + "\n", encoding="utf-8")
    else:
        print(report_json, file=sys.stderr)
    return EXIT_OK


def _score_pairs(gold_records, pred_records):
    """Join gold to predictions on (SubjectEntityID, Relation)."""
    pred_by_key = {(p.subject_entity_id, p.relation): p for p in pred_records}
    pairs = []
    missing = []
    for gold in gold_records:
        key = (gold.subject_entity_id, gold.relation)
        pred = pred_by_key.pop(key, None)
        if pred is None:
            missing.append(key)
            continue
        pairs.append(
            pair_scores(
                object_key_set(pred.relation, pred.object_entities, pred.object_entities_id),
                object_key_set(gold.relation, gold.object_entities, gold.object_entities_id),
                gold.relation,
            )
        )
    extra = list(pred_by_key)
    return pairs, missing, extra


def cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        gold_records = load_dataset(args.gold)
        pred_records = load_dataset(args.input)
    except (DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    pairs, missing, extra = _score_pairs(gold_records, pred_records)
    for subject_id, relation in missing:
        print(f"gold row without prediction: {subject_id} {relation.value}", file=sys.stderr)
    for subject_id, relation in extra:
        print(f"prediction without gold row: {subject_id} {relation.value}", file=sys.stderr)
    if missing:
        print(f"error: {len(missing)} gold rows lack predictions", file=sys.stderr)
        return EXIT_JOIN

    report = overall_report(pairs)
    print(format_report(report))
    report_path = Path(args.report) if args.report else Path(str(args.input) + ".scores.json")
    report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        payload = json.loads(Path(args.input).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        report = _report_from_dict(payload)
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error: malformed score report: {exc}", file=sys.stderr)
        return EXIT_IO
    print(format_report(report))
    return EXIT_OK


def _report_from_dict(payload: dict) -> ScoreReport:
    from .dataset import Relation

    def row(d: dict) -> ScoreRow:
        return ScoreRow(d["precision"], d["recall"], d["f1"], d["count"])

    return ScoreReport(
        per_relation={Relation(name): row(r) for name, r in payload["per_relation"].items()},
        overall=row(payload["overall"]),
        zero_object=None if payload.get("zero_object") is None else row(payload["zero_object"]),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbcomplete",
        description="Complete Wikidata triples via numbered SPARQL templates and score the results.",
    )
    parser.add_argument("--version", action="version", version=f"kbcomplete {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_split = sub.add_parser("split", help="randomly split a JSONL dataset")
    p_split.add_argument("--input", required=True)
    p_split.add_argument("--ratio", type=float, default=0.8)
    p_split.add_argument("--seed", type=int, default=13)
    p_split.add_argument("--train-out", required=True)
    p_split.add_argument("--holdout-out", required=True)
    p_split.set_defaults(func=cmd_split)

    p_route = sub.add_parser("route", help="route records to template ids without fetching")
    p_route.add_argument("--input", required=True)
    p_route.add_argument("--output", required=True)
    p_route.add_argument("--router", default="rule", help="rule | constant:N | external:URL")
    p_route.add_argument("--parallelism", type=int, default=1)
    p_route.set_defaults(func=cmd_route)

    p_complete = sub.add_parser("complete", help="route, query Wikidata and write predictions")
    p_complete.add_argument("--input", required=True)
    p_complete.add_argument("--output", required=True)
    p_complete.add_argument("--router", default="rule", help="rule | constant:N | external:URL")
    p_complete.add_argument("--mode", default="live", choices=["live", "record", "replay"])
    p_complete.add_argument("--endpoint", default="https://query.wikidata.org/sparql")
    p_complete.add_argument("--cache-dir")
    p_complete.add_argument("--parallelism", type=int, default=1)
    p_complete.add_argument("--min-interval", type=float, default=1.0,
                            help="minimum seconds between live request starts")
    p_complete.add_argument("--report", help="write the JSON run report here instead of stderr")
    p_complete.set_defaults(func=cmd_complete)

    p_eval = sub.add_parser("evaluate", help="score predictions against gold")
    p_eval.add_argument("--input", required=True, help="predictions JSONL")
    p_eval.add_argument("--gold", required=True, help="gold JSONL")
    p_eval.add_argument("--report", help="JSON score report path (default: <input>.scores.json)")
    p_eval.set_defaults(func=cmd_evaluate)

    p_report = sub.add_parser("report", help="render a saved JSON score report as a table")
    p_report.add_argument("--input", required=True)
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ReplayMissError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
