"""Reliability-gated regional mental-health time series from lexicon-scored text."""

__version__ = "0.1.0"
