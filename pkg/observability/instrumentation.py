"""OpenTelemetry instrumentation for moment-orders.

This module provides functions to initialize tracing and decorators
that wrap estimators, checkers and simulation runs in spans.
"""

import functools
import json
import sys
from typing import Any, Callable, Literal, TypeVar

import numpy as np
from opentelemetry import trace
from opentelemetry.trace import Status, StatusCode

# Type variable for preserving function signatures
F = TypeVar("F", bound=Callable[..., Any])

TRACER_NAME = "moment-orders"

# Global tracer instance
_tracer: trace.Tracer | None = None


def get_tracer() -> trace.Tracer:
    """Get the global tracer instance."""
    global _tracer
    if _tracer is None:
        _tracer = trace.get_tracer(TRACER_NAME)
    return _tracer


def init_tracing(
    service_name: str = TRACER_NAME,
    exporter: Literal["console", "none"] = "console",
) -> None:
    """Initialize tracing for the current process.

    With exporter "none" the API keeps its no-op provider, so decorated
    functions run without recording anything.

    Args:
        service_name: Value of the service.name resource attribute.
        exporter: "console" writes finished spans to stderr.
    """
    if exporter == "none":
        return

    from opentelemetry.sdk.resources import Resource
    from opentelemetry.sdk.trace import TracerProvider
    from opentelemetry.sdk.trace.export import (
        ConsoleSpanExporter,
        SimpleSpanProcessor,
    )

    tracer_provider = TracerProvider(
        resource=Resource.create({"service.name": service_name})
    )
    tracer_provider.add_span_processor(
        SimpleSpanProcessor(ConsoleSpanExporter(out=sys.stderr))
    )

    global _tracer
    _tracer = trace.get_tracer(TRACER_NAME, tracer_provider=tracer_provider)


def _serialize_value(value: Any) -> str:
    """Serialize a value to string for span attributes."""
    if isinstance(value, np.ndarray):
        return f"ndarray(shape={value.shape}, dtype={value.dtype})"
    if isinstance(value, (list, tuple)) and len(value) > 16:
        return f"{type(value).__name__}(len={len(value)})"
    if hasattr(value, "model_dump"):
        value = value.model_dump(mode="json")
    try:
        if isinstance(value, (dict, list, tuple)):
            return json.dumps(value, ensure_ascii=False, default=str)[:2048]
        return str(value)
    except Exception:
        return str(value)


def trace_operation(
    name: str | None = None,
    capture_input: bool = True,
    capture_output: bool = True,
) -> Callable[[F], F]:
    """Decorator to trace an operation with input/output capture.

    Args:
        name: Custom span name. Defaults to "op.<function name>".
        capture_input: Whether to capture input arguments. Defaults to True.
        capture_output: Whether to capture return value. Defaults to True.

    Returns:
        Decorated function with tracing.

    Example:
        @trace_operation(name="moments.estimate")
        def estimate(spec, sample):
            ...
    """
    def decorator(func: F) -> F:
        span_name = name or f"op.{func.__name__}"

        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            tracer = get_tracer()

            with tracer.start_as_current_span(span_name) as span:
                span.set_attribute("operation.name", func.__name__)

                if capture_input:
                    if args:
                        span.set_attribute("input.args", _serialize_value(args))
                    if kwargs:
                        span.set_attribute("input.kwargs", _serialize_value(kwargs))

                try:
                    result = func(*args, **kwargs)

                    if capture_output and result is not None:
                        span.set_attribute("output.result", _serialize_value(result))

                    span.set_status(Status(StatusCode.OK))
                    return result

                except Exception as e:
                    span.set_status(Status(StatusCode.ERROR, str(e)))
                    span.set_attribute("error.type", type(e).__name__)
                    span.set_attribute("error.message", str(e))
                    raise

        return wrapper  # type: ignore

    return decorator


def trace_span(name: str) -> Callable[[F], F]:
    """Simple decorator to create a named span around a function.

    Use this for hot paths where serializing arguments would cost more
    than the call itself.

    Args:
        name: Span name.

    Returns:
        Decorated function with tracing.
    """
    def decorator(func: F) -> F:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            tracer = get_tracer()
            with tracer.start_as_current_span(name) as span:
                span.set_attribute("function.name", func.__name__)
                try:
                    result = func(*args, **kwargs)
                    span.set_status(Status(StatusCode.OK))
                    return result
                except Exception as e:
                    span.set_status(Status(StatusCode.ERROR, str(e)))
                    raise

        return wrapper  # type: ignore

    return decorator
