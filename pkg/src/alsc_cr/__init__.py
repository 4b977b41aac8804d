"""Coreference-focused aspect-sentiment benchmark construction, sweep
orchestration against pluggable trainer backends, and multi-seed robust
statistics with table/figure reporting."""

__version__ = "0.1.0"
