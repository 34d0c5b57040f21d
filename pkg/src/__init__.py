"""MRFG - user-level stance detection over relevance-filtered social graphs."""

__version__ = "0.1.0"
