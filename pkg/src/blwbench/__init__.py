"""Baseline-wander removal benchmark: DeepFilter, classical filters, metrics and data pipeline."""

__version__ = "0.1.0"
