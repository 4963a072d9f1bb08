"""Synthetic OSCE transcript generation, silver labeling and
checklist-based LLM judge benchmarking."""

__version__ = "0.1.0"
