"""Batch toolkit for mining, scoring, and evaluating reasons behind human
actions narrated in timestamped video transcripts."""

__version__ = "0.1.0"
