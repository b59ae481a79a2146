"""Continuous matrix product states: data model, evaluators, gauges and tangent metrics."""
__version__ = "0.1.0"
