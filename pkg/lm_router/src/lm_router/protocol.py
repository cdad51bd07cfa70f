"""The contracts shared with the completion pipeline.

These restate the pipeline's documented external interfaces (the JSONL
dataset schema, the routing-question format and the fixed relation →
template-id assignment) so this package never has to import it.
"""

PROMPT_FORMAT = "What Z completes the relationship {relation} for {subject}?"

RELATION_TEMPLATE_IDS = {
    "countryLandBordersCountry": 1,
    "personHasCityOfDeath": 2,
    "seriesHasNumberOfEpisodes": 3,
    "awardWonBy": 4,
    "companyTradesAtStockExchange": 5,
}

TEMPLATE_ID_STRINGS = tuple(str(i) for i in sorted(RELATION_TEMPLATE_IDS.values()))

# Wire protocol served by this package and consumed by the pipeline's
# external router: POST /route {"prompt": str} -> {"output": str}, and
# POST /route_batch {"prompts": [str]} -> {"outputs": [str]} positionally.
ROUTE_PATH = "/route"
ROUTE_BATCH_PATH = "/route_batch"


def build_prompt(subject: str, relation: str) -> str:
    return PROMPT_FORMAT.format(relation=relation, subject=subject)
