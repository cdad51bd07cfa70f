"""Learned template routing: fine-tune a small text-to-text model to map
routing questions to template-id strings and serve it over HTTP."""

__version__ = "0.1.0"
