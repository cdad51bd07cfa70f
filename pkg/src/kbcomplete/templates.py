"""The five numbered SPARQL query templates and their safe instantiation.

Each relation is answered by one fixed query against a single Wikidata
property: P47 (shares border with), P20 (place of death), P1113 (number
of episodes), P166 (award received, read in reverse so winners come back
as objects) and P414 (stock exchange). Entity-kind queries select the
object and its English label via the label service; the numeric query
selects the bare literal. The only dynamic part of any query is the
subject QID, substituted for the «SUBJ» placeholder after strict pattern
validation so no other text can ever reach the query.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .dataset import ObjectKind, Relation, is_qid

PLACEHOLDER = "«SUBJ»"

TEMPLATE_IDS = (1, 2, 3, 4, 5)


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class QueryTemplate:
    id: int
    relation: Relation
    query_text: str
    direction: str  # "forward" | "reverse"
    object_kind: ObjectKind


_ENTITY_FORWARD = """\
SELECT DISTINCT ?obj ?objLabel WHERE {{
  wd:{placeholder} wdt:{prop} ?obj .
  SERVICE wikibase:label {{ bd:serviceParam wikibase:language "en" . }}
}}"""

_ENTITY_REVERSE = """\
SELECT DISTINCT ?obj ?objLabel WHERE {{
  ?obj wdt:{prop} wd:{placeholder} .
  SERVICE wikibase:label {{ bd:serviceParam wikibase:language "en" . }}
}}"""

_NUMERIC_FORWARD = """\
SELECT ?value WHERE {{
  wd:{placeholder} wdt:{prop} ?value .
}}"""


def _forward(prop: str) -> str:
    return _ENTITY_FORWARD.format(placeholder=PLACEHOLDER, prop=prop)


_DEFAULT_QUERIES: dict[Relation, tuple[str, str]] = {
    Relation.COUNTRY_LAND_BORDERS_COUNTRY: (_forward("P47"), "forward"),
    Relation.PERSON_HAS_CITY_OF_DEATH: (_forward("P20"), "forward"),
    Relation.SERIES_HAS_NUMBER_OF_EPISODES: (
        _NUMERIC_FORWARD.format(placeholder=PLACEHOLDER, prop="P1113"),
        "forward",
    ),
    Relation.AWARD_WON_BY: (
        _ENTITY_REVERSE.format(placeholder=PLACEHOLDER, prop="P166"),
        "reverse",
    ),
    Relation.COMPANY_TRADES_AT_STOCK_EXCHANGE: (_forward("P414"), "forward"),
}

# Fixed id assignment, in the relation order the dataset documents them.
_ID_ORDER = (
    Relation.COUNTRY_LAND_BORDERS_COUNTRY,
    Relation.PERSON_HAS_CITY_OF_DEATH,
    Relation.SERIES_HAS_NUMBER_OF_EPISODES,
    Relation.AWARD_WON_BY,
    Relation.COMPANY_TRADES_AT_STOCK_EXCHANGE,
)


def _build_registry(queries: dict[Relation, tuple[str, str]]) -> tuple[QueryTemplate, ...]:
    templates = []
    for template_id, relation in zip(TEMPLATE_IDS, _ID_ORDER):
        query_text, direction = queries[relation]
        if query_text.count(PLACEHOLDER) != 1:
            raise TemplateError(
                f"template for {relation} must contain {PLACEHOLDER} exactly once"
            )
        templates.append(
            QueryTemplate(template_id, relation, query_text, direction, relation.object_kind)
        )
    return tuple(templates)


_DEFAULT_REGISTRY = _build_registry(_DEFAULT_QUERIES)

_RELATION_TO_ID = {t.relation: t.id for t in _DEFAULT_REGISTRY}


def registry(overrides_path: str | Path | None = None) -> tuple[QueryTemplate, ...]:
    """The five templates in id order. ``overrides_path`` may point to a JSON
    file mapping relation names to replacement query text (each still has to
    contain the placeholder exactly once); direction and kind are fixed."""
    if overrides_path is None:
        return _DEFAULT_REGISTRY
    overrides = json.loads(Path(overrides_path).read_text(encoding="utf-8"))
    if not isinstance(overrides, dict):
        raise TemplateError("template override file must hold a JSON object")
    queries = dict(_DEFAULT_QUERIES)
    for name, text in overrides.items():
        try:
            relation = Relation(name)
        except ValueError:
            raise TemplateError(f"unknown relation {name!r} in template overrides") from None
        if not isinstance(text, str):
            raise TemplateError(f"override for {name!r} must be a string")
        queries[relation] = (text, queries[relation][1])
    return _build_registry(queries)


def oracle_template_id(relation: Relation) -> int:
    """The fixed relation → template id mapping (a bijection onto 1..5)."""
    return _RELATION_TO_ID[relation]


def template_by_id(template_id: int, templates: tuple[QueryTemplate, ...] | None = None) -> QueryTemplate:
    templates = templates if templates is not None else _DEFAULT_REGISTRY
    for template in templates:
        if template.id == template_id:
            return template
    raise TemplateError(f"unknown template id {template_id!r}")


def instantiate(
    template_id: int,
    subject_qid: str,
    templates: tuple[QueryTemplate, ...] | None = None,
) -> str:
    """Substitute a subject QID into the numbered template.

    The QID is validated against ^Q[1-9][0-9]*$ here regardless of earlier
    checks; anything else (whitespace, punctuation, operators) is rejected
    before it can touch the query text.
    """
    if not is_qid(subject_qid):
        raise TemplateError(f"subject {subject_qid!r} does not match the QID pattern")
    template = template_by_id(template_id, templates)
    return template.query_text.replace(PLACEHOLDER, subject_qid)
