"""Shared test helpers: local HTTP doubles, cache seeding and a fake clock."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs

import pytest

from kbcomplete.dataset import ObjectKind, Relation, TripleRecord, load_dataset
from kbcomplete.templates import instantiate, oracle_template_id
from kbcomplete.wikidata import ClientStats, EntityRef, ObjectSet, cache_key

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def validation_records():
    return load_dataset(FIXTURES / "validation_like.jsonl")


@pytest.fixture(scope="session")
def train_records():
    return load_dataset(FIXTURES / "train_like.jsonl")


def sparql_body_for_record(record: TripleRecord) -> bytes:
    """The endpoint response body a (fictional) live run would have produced
    for this record's gold objects."""
    if record.relation.object_kind is ObjectKind.NUMERIC:
        bindings = [
            {
                "value": {
                    "type": "literal",
                    "datatype": "http://www.w3.org/2001/XMLSchema#decimal",
                    "value": value,
                }
            }
            for value in record.object_entities_id
        ]
        body = {"head": {"vars": ["value"]}, "results": {"bindings": bindings}}
    else:
        bindings = [
            {
                "obj": {"type": "uri", "value": f"http://www.wikidata.org/entity/{qid}"},
                "objLabel": {"xml:lang": "en", "type": "literal", "value": label},
            }
            for label, qid in zip(record.object_entities, record.object_entities_id)
        ]
        body = {"head": {"vars": ["obj", "objLabel"]}, "results": {"bindings": bindings}}
    return json.dumps(body).encode("utf-8")


def install_cache_body(cache_dir: Path, template_id: int, subject_qid: str, body: bytes) -> str:
    """Place a raw response body in the cache under the digest the client
    will compute for this (template, subject) query."""
    query = instantiate(template_id, subject_qid)
    digest = cache_key(query)
    cache_dir.mkdir(parents=True, exist_ok=True)
    (cache_dir / digest).write_bytes(body)
    with (cache_dir / "index.jsonl").open("a", encoding="utf-8") as handle:
        handle.write(json.dumps({"digest": digest, "query": query}) + "\n")
    return digest


def build_replay_cache(cache_dir: Path, records) -> None:
    """Seed a replay cache answering each record's oracle-template query
    from its own gold objects."""
    for record in records:
        body = sparql_body_for_record(record)
        install_cache_body(cache_dir, oracle_template_id(record.relation), record.subject_entity_id, body)


class GoldEchoClient:
    """Client stub answering every query from the record's own gold set."""

    def __init__(self, records):
        self._by_subject = {r.subject_entity_id: r for r in records}
        self.stats = ClientStats()

    def fetch_objects(self, template_id: int, subject_qid: str) -> ObjectSet:
        record = self._by_subject[subject_qid]
        if record.relation.object_kind is ObjectKind.NUMERIC:
            if record.object_entities_id:
                return ObjectSet(number=record.object_entities_id[0])
            return ObjectSet()
        refs = tuple(
            EntityRef(qid=qid, label=label)
            for label, qid in zip(record.object_entities, record.object_entities_id)
        )
        return ObjectSet(entities=refs)


class _ScriptedHandler(BaseHTTPRequestHandler):
    """POST handler driven by the server's ``script`` callable."""

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length)
        status, headers, body = self.server.script(self.path, self.headers, raw)
        self.server.requests.append(
            {"path": self.path, "headers": dict(self.headers), "body": raw}
        )
        self.send_response(status)
        for name, value in headers.items():
            self.send_header(name, value)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class ScriptedHTTPServer(ThreadingHTTPServer):
    """Local HTTP double; ``script(path, headers, body)`` returns
    (status, headers, body_bytes) per request."""

    def __init__(self, script):
        super().__init__(("127.0.0.1", 0), _ScriptedHandler)
        self.script = script
        self.requests: list[dict] = []
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.shutdown()
        self.server_close()


def sparql_script(query_to_body):
    """Script for a fake SPARQL endpoint: map query text to body bytes."""

    def script(path, headers, raw):
        params = parse_qs(raw.decode("utf-8"))
        query = params.get("query", [""])[0]
        body = query_to_body(query)
        if body is None:
            return 400, {"Content-Type": "text/plain"}, b"no such query"
        return 200, {"Content-Type": "application/sparql-results+json"}, body

    return script


def oracle_router_script():
    """Script for a fake model server that answers the oracle template id by
    spotting the relation name inside the prompt."""

    def answer(prompt: str) -> str:
        for relation in Relation:
            if f"relationship {relation.value} for" in prompt:
                return str(oracle_template_id(relation))
        return "?"

    def script(path, headers, raw):
        try:
            payload = json.loads(raw.decode("utf-8"))
        except json.JSONDecodeError:
            return 400, {"Content-Type": "application/json"}, b'{"error": "bad json"}'
        if path == "/route":
            body = {"output": answer(payload["prompt"])}
        elif path == "/route_batch":
            body = {"outputs": [answer(p) for p in payload["prompts"]]}
        else:
            return 404, {"Content-Type": "application/json"}, b'{"error": "no such path"}'
        return 200, {"Content-Type": "application/json"}, json.dumps(body).encode("utf-8")

    return script


class FakeClock:
    """Manual clock whose sleep() advances time instantly."""

    def __init__(self):
        self.now = 0.0
        self.sleeps: list[float] = []
        self._lock = threading.Lock()

    def monotonic(self) -> float:
        with self._lock:
            return self.now

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self.sleeps.append(seconds)
            self.now += seconds
