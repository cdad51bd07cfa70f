"""Template routing: decide which numbered query answers a record.

Three interchangeable routers exist. The rule router applies the fixed
relation → id mapping, the constant router always answers one id (useful
as a deliberately-wrong control), and the external router asks a model
server over HTTP (POST /route with {"prompt": ...}, reply {"output": ...})
and decodes the raw model text. Decoding is strict: exactly one base-10
integer token, and it has to fall in 1..5. Anything else raises instead of
silently falling back, so mis-routing stays observable downstream.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass
from urllib.parse import urlparse

import requests

from .dataset import Relation, TripleRecord, build_prompt
from .templates import TEMPLATE_IDS, oracle_template_id

_INT_TOKEN_RE = re.compile(r"[+-]?[0-9]+")


class RoutingError(Exception):
    """Routing failed; ``raw_output`` preserves the offending model text."""

    def __init__(self, message: str, raw_output: str | None = None):
        self.raw_output = raw_output
        super().__init__(message)


@dataclass(frozen=True)
class RoutingInput:
    subject_label: str
    relation: Relation
    prompt: str

    @classmethod
    def from_record(cls, record: TripleRecord) -> "RoutingInput":
        return cls(record.subject_entity, record.relation, build_prompt(record))


def decode_template_id(model_output: str) -> int:
    """Decode raw model text into a template id.

    Surrounding whitespace is tolerated; beyond that the text must be a
    single ASCII integer token in {1..5}.
    """
    token = model_output.strip()
    if _INT_TOKEN_RE.fullmatch(token) is None:
        raise RoutingError(
            f"model output {model_output!r} is not a single integer token",
            raw_output=model_output,
        )
    value = int(token)
    if value not in TEMPLATE_IDS:
        raise RoutingError(
            f"model output {model_output!r} is outside the template id set {TEMPLATE_IDS}",
            raw_output=model_output,
        )
    return value


class RuleRouter:
    """Deterministic router: the oracle relation → template id mapping."""

    def route(self, routing_input: RoutingInput) -> int:
        return oracle_template_id(routing_input.relation)

    def __repr__(self) -> str:
        return "RuleRouter()"


class ConstantRouter:
    """Answers the same template id for every input."""

    def __init__(self, template_id: int):
        if template_id not in TEMPLATE_IDS:
            raise ValueError(f"constant router id must be in {TEMPLATE_IDS}, got {template_id!r}")
        self.template_id = template_id

    def route(self, routing_input: RoutingInput) -> int:
        return self.template_id

    def __repr__(self) -> str:
        return f"ConstantRouter({self.template_id})"


class ExternalRouter:
    """Client for the router wire protocol.

    Concurrent calls are capped by ``max_in_flight``; each request/response
    pair travels on its own connection, so replies can never be attributed
    to the wrong prompt.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        max_in_flight: int = 4,
        session: requests.Session | None = None,
    ):
        parsed = urlparse(endpoint)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValueError(f"external router endpoint must be an absolute HTTP(S) URL, got {endpoint!r}")
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _post(self, path: str, payload: dict) -> dict:
        with self._slots:
            try:
                response = self._session.post(
                    self.endpoint + path, json=payload, timeout=self.timeout
                )
            except requests.RequestException as exc:
                raise RoutingError(f"router transport failure: {exc}") from exc
        if response.status_code != 200:
            raise RoutingError(f"router replied with HTTP {response.status_code}")
        try:
            body = response.json()
        except ValueError as exc:
            raise RoutingError("router reply is not JSON") from exc
        return body

    def route(self, routing_input: RoutingInput) -> int:
        body = self._post("/route", {"prompt": routing_input.prompt})
        if not isinstance(body.get("output"), str):
            raise RoutingError("router reply lacks a string 'output' field")
        return decode_template_id(body["output"])

    def route_batch(self, prompts: list[str]) -> list[int]:
        body = self._post("/route_batch", {"prompts": prompts})
        outputs = body.get("outputs")
        if not isinstance(outputs, list) or len(outputs) != len(prompts):
            raise RoutingError("router batch reply does not match the prompt count")
        return [decode_template_id(output) for output in outputs]

    def __repr__(self) -> str:
        return f"ExternalRouter({self.endpoint!r})"


Router = RuleRouter | ConstantRouter | ExternalRouter


def route(routing_input: RoutingInput, router: Router) -> int:
    """Route one input, guaranteeing the answer lies in the template id set."""
    template_id = router.route(routing_input)
    if template_id not in TEMPLATE_IDS:
        raise RoutingError(f"router {router!r} produced out-of-set id {template_id!r}")
    return template_id


def parse_router_spec(spec: str) -> Router:
    """Build a router from its CLI spelling: "rule", "constant:N" or
    "external:URL"."""
    if spec == "rule":
        return RuleRouter()
    kind, _, argument = spec.partition(":")
    if kind == "constant" and argument:
        try:
            template_id = int(argument)
        except ValueError:
            raise ValueError(f"constant router wants an integer id, got {argument!r}") from None
        return ConstantRouter(template_id)
    if kind == "external" and argument:
        return ExternalRouter(argument)
    raise ValueError(f"unrecognized router spec {spec!r} (expected rule, constant:N or external:URL)")
