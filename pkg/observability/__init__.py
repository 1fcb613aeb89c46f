"""Observability module for moment-orders.

Uses OpenTelemetry spans around estimators, checkers and simulations.
"""

from .instrumentation import init_tracing, trace_operation, trace_span

__all__ = ["init_tracing", "trace_operation", "trace_span"]
