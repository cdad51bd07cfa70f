"""SPARQL endpoint client with retries, rate limiting and record/replay.

Three modes:

* ``live``    — every query goes to the endpoint.
* ``record``  — answers come from the on-disk cache when present, otherwise
  the endpoint is queried and the raw response body is persisted, so a later
  replay run needs no network at all.
* ``replay``  — answers come from the cache only; a missing query is an
  error, never a hidden live call.

The cache stores one file of verbatim body bytes per query digest plus an
``index.jsonl`` sidecar mapping digests back to query text for audit.
Bodies are written to a temp file and renamed into place, so concurrent
recorders never interleave bytes. A shared limiter keeps consecutive
request starts at least ``min_request_interval`` apart and caps the number
of in-flight requests.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from tempfile import NamedTemporaryFile
from typing import Callable, NamedTuple

import requests

from .dataset import ObjectKind, QID_RE
from .templates import QueryTemplate, instantiate, template_by_id

logger = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://query.wikidata.org/sparql"
SPARQL_JSON = "application/sparql-results+json"
MODES = ("live", "record", "replay")

ENTITY_URI_PREFIX = "http://www.wikidata.org/entity/"


class ClientError(Exception):
    """Base class for endpoint client failures."""


class ConfigError(ClientError):
    pass


class TransportError(ClientError):
    def __init__(self, message: str, status: int | None = None, attempts: int = 1):
        self.status = status
        self.attempts = attempts
        super().__init__(message)


class MalformedResultsError(ClientError):
    pass


class ReplayMissError(ClientError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"query {digest} not present in the replay cache")


@dataclass
class EndpointConfig:
    endpoint_url: str = DEFAULT_ENDPOINT
    user_agent: str = ""
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0
    min_request_interval: float = 1.0
    mode: str = "live"
    cache_dir: Path | None = None
    max_in_flight: int = 4

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.user_agent.strip():
            raise ConfigError("user_agent must be nonempty (endpoint policy)")
        if self.mode in ("record", "replay") and self.cache_dir is None:
            raise ConfigError(f"{self.mode} mode requires cache_dir")
        if self.cache_dir is not None:
            self.cache_dir = Path(self.cache_dir)


def cache_key(query: str) -> str:
    """SHA-256 hex digest of the exact query text."""
    return hashlib.sha256(query.encode("utf-8")).hexdigest()


class Binding(NamedTuple):
    value: str
    type: str


ResultRow = dict[str, Binding]


@dataclass(frozen=True)
class EntityRef:
    qid: str
    label: str = ""


@dataclass(frozen=True)
class ObjectSet:
    """Normalized query result: entity refs, one numeric literal, or empty."""

    entities: tuple[EntityRef, ...] = ()
    number: str | None = None

    def __post_init__(self):
        if self.entities and self.number is not None:
            raise ValueError("an ObjectSet holds entities or a number, not both")

    @property
    def kind(self) -> str:
        if self.entities:
            return "entities"
        if self.number is not None:
            return "number"
        return "empty"

    @property
    def is_empty(self) -> bool:
        return self.kind == "empty"


class RateLimiter:
    """Reserves request start slots so consecutive starts are spaced by at
    least the minimum interval, whatever the caller concurrency."""

    def __init__(
        self,
        min_interval: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.min_interval = min_interval
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_start = float("-inf")

    def wait(self) -> None:
        with self._lock:
            now = self._clock()
            start_at = max(now, self._next_start)
            self._next_start = start_at + self.min_interval
        delay = start_at - now
        if delay > 0:
            self._sleep(delay)


@dataclass
class ClientStats:
    requests: int = 0
    cache_hits: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def count_request(self):
        with self._lock:
            self.requests += 1

    def count_hit(self):
        with self._lock:
            self.cache_hits += 1


class ResponseCache:
    """Digest-addressed store of raw response bodies under one directory."""

    def __init__(self, cache_dir: Path):
        self.cache_dir = Path(cache_dir)
        self.index_path = self.cache_dir / "index.jsonl"
        self._lock = threading.Lock()
        self._indexed: set[str] | None = None

    def body_path(self, digest: str) -> Path:
        return self.cache_dir / digest

    def get(self, digest: str) -> bytes | None:
        path = self.body_path(digest)
        if not path.exists():
            return None
        return path.read_bytes()

    def put(self, digest: str, query: str, body: bytes) -> None:
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        with NamedTemporaryFile(dir=self.cache_dir, delete=False) as tmp:
            tmp.write(body)
            tmp_path = Path(tmp.name)
        tmp_path.replace(self.body_path(digest))
        with self._lock:
            if self._indexed is None:
                self._indexed = self._load_index()
            if digest not in self._indexed:
                with self.index_path.open("a", encoding="utf-8") as handle:
                    handle.write(json.dumps({"digest": digest, "query": query}) + "\n")
                self._indexed.add(digest)

    def _load_index(self) -> set[str]:
        if not self.index_path.exists():
            return set()
        digests = set()
        with self.index_path.open(encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    digests.add(json.loads(line)["digest"])
        return digests

    def is_empty(self) -> bool:
        if not self.cache_dir.is_dir():
            return True
        return not any(p.name != self.index_path.name for p in self.cache_dir.iterdir())


def parse_sparql_json(body: bytes) -> list[ResultRow]:
    """Rows from the standard SPARQL JSON results format."""
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedResultsError(f"response body is not JSON: {exc}") from exc
    try:
        bindings = payload["results"]["bindings"]
    except (TypeError, KeyError):
        raise MalformedResultsError("response body lacks results.bindings") from None
    if not isinstance(bindings, list):
        raise MalformedResultsError("results.bindings is not a list")
    rows = []
    for binding in bindings:
        if not isinstance(binding, dict):
            raise MalformedResultsError("binding row is not an object")
        row: ResultRow = {}
        for var, cell in binding.items():
            if not isinstance(cell, dict) or "value" not in cell or "type" not in cell:
                raise MalformedResultsError(f"binding for {var!r} lacks value/type")
            row[var] = Binding(value=str(cell["value"]), type=str(cell["type"]))
        rows.append(row)
    return rows


class WikidataClient:
    """Thread-safe SPARQL execution per the configured mode.

    ``clock``/``sleep`` exist for deterministic tests of the rate limiting
    and backoff behavior.
    """

    def __init__(
        self,
        config: EndpointConfig,
        session: requests.Session | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.stats = ClientStats()
        self._session = session or requests.Session()
        self._sleep = sleep
        self._limiter = RateLimiter(config.min_request_interval, clock=clock, sleep=sleep)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._cache = ResponseCache(config.cache_dir) if config.cache_dir is not None else None

    def verify_replay_ready(self) -> None:
        """Fail fast when a replay run could not answer anything at all."""
        if self.config.mode != "replay":
            return
        if self._cache is None or self._cache.is_empty():
            raise ConfigError(
                f"replay cache {self.config.cache_dir} is missing or empty; "
                "every query would be a replay miss"
            )

    def execute(self, query: str) -> list[ResultRow]:
        """Run one query and parse its rows. Record mode persists the raw
        body; replay mode reads exclusively from the cache."""
        if not query.strip():
            raise ValueError("query must be nonempty")
        digest = cache_key(query)
        mode = self.config.mode

        if mode in ("record", "replay"):
            body = self._cache.get(digest)
            if body is not None:
                self.stats.count_hit()
                return parse_sparql_json(body)
            if mode == "replay":
                raise ReplayMissError(digest)

        body = self._fetch(query)
        if mode == "record":
            self._cache.put(digest, query, body)
        return parse_sparql_json(body)

    def _fetch(self, query: str) -> bytes:
        headers = {
            "Accept": SPARQL_JSON,
            "User-Agent": self.config.user_agent,
        }
        attempts = self.config.max_retries + 1
        last_error = "no attempt made"
        last_status: int | None = None
        retry_after: float | None = None
        for attempt in range(attempts):
            if attempt > 0:
                if last_status == 429 and retry_after is not None:
                    self._sleep(retry_after)
                else:
                    self._sleep(self.config.backoff_base * (2 ** (attempt - 1)))
            self._limiter.wait()
            self.stats.count_request()
            try:
                with self._slots:
                    response = self._session.post(
                        self.config.endpoint_url,
                        data={"query": query},
                        headers=headers,
                        timeout=self.config.timeout,
                    )
            except requests.RequestException as exc:
                last_error, last_status, retry_after = str(exc), None, None
                continue
            if response.status_code == 200:
                return response.content
            last_error = f"HTTP {response.status_code}"
            last_status = response.status_code
            retry_after = _parse_retry_after(response.headers.get("Retry-After"))
            if 400 <= response.status_code < 500 and response.status_code != 429:
                raise TransportError(
                    f"endpoint rejected the query: {last_error}",
                    status=response.status_code,
                    attempts=attempt + 1,
                )
        raise TransportError(
            f"endpoint failed after {attempts} attempts: {last_error}",
            status=last_status,
            attempts=attempts,
        )

    def fetch_objects(self, template_id: int, subject_qid: str) -> ObjectSet:
        """Instantiate the numbered template for a subject, execute it and
        normalize rows into an ObjectSet.

        Entity results are deduplicated by QID and ordered by the numeric
        part of the QID, so output never depends on endpoint row order.
        The numeric template yields the smallest literal when Wikidata holds
        several statements.
        """
        template = template_by_id(template_id)
        query = instantiate(template_id, subject_qid)
        rows = self.execute(query)
        if template.object_kind is ObjectKind.NUMERIC:
            return _normalize_numeric(rows)
        return _normalize_entities(rows)


def _parse_retry_after(value: str | None) -> float | None:
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


def _qid_from_binding(binding: Binding) -> str | None:
    # Unknown-value statements surface as bnodes; they carry no QID to score.
    if binding.type != "uri" or not binding.value.startswith(ENTITY_URI_PREFIX):
        return None
    qid = binding.value[len(ENTITY_URI_PREFIX):]
    return qid if QID_RE.fullmatch(qid) else None


def _normalize_entities(rows: list[ResultRow]) -> ObjectSet:
    refs: dict[str, EntityRef] = {}
    for row in rows:
        if "obj" not in row:
            raise MalformedResultsError("entity row missing the id variable 'obj'")
        qid = _qid_from_binding(row["obj"])
        if qid is None:
            continue
        label_binding = row.get("objLabel")
        label = label_binding.value if label_binding is not None else ""
        refs.setdefault(qid, EntityRef(qid=qid, label=label))
    ordered = sorted(refs.values(), key=lambda ref: int(ref.qid[1:]))
    return ObjectSet(entities=tuple(ordered))


def _normalize_numeric(rows: list[ResultRow]) -> ObjectSet:
    values = []
    for row in rows:
        if "value" not in row:
            raise MalformedResultsError("numeric row missing the literal variable 'value'")
        text = row["value"].value
        try:
            numeric = Decimal(text)
        except ArithmeticError:
            raise MalformedResultsError(f"numeric literal {text!r} is not a decimal") from None
        if numeric < 0:
            raise MalformedResultsError(f"numeric literal {text!r} is negative")
        values.append((numeric, text))
    if not values:
        return ObjectSet()
    values.sort()
    return ObjectSet(number=values[0][1])
