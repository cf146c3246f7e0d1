"""Extraction pipeline for thermoelectric property mining from full-text articles.

The package is organised around the pipeline stages: corpus ingestion,
text preprocessing, LLM gateway, extraction agents, orchestration,
unit/label normalization, benchmarking, and dataset storage.
"""

__version__ = "0.1.0"
