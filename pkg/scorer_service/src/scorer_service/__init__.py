"""Scorer service: hosts embedding, entailment, and fill-in-the-blank
models behind the newline-delimited JSON wire protocol."""

__version__ = "0.1.0"
