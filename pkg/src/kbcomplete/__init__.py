"""Wikidata triple completion: route (subject, relation) pairs to numbered
SPARQL templates, execute them against Wikidata, and score the results."""

__version__ = "0.1.0"
