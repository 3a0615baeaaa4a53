"""A decorator that wraps a solver entry point in an OpenTelemetry span and logs its outcome."""

import functools

from opentelemetry import trace

from rschwarz.core.logging.logging import get_logger

logger = get_logger("stages")
tracer = trace.get_tracer(__name__)


def _scalar_attributes(kwargs: dict) -> dict:
    # Arrays and contexts are too large for span attributes.
    return {
        key: value
        for key, value in kwargs.items()
        if isinstance(value, bool | int | float | str)
    }


def traced_and_logged(func):
    """Wrap a function in a span named after it.

    Scalar keyword arguments are attached as span attributes; failures are
    logged and recorded on the span before being re-raised.
    """

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        with tracer.start_as_current_span(func.__name__) as span:
            for key, value in _scalar_attributes(kwargs).items():
                span.set_attribute(key, value)
            try:
                result = func(*args, **kwargs)
                logger.debug(f"{func.__name__} finished")
                return result
            except Exception as e:
                logger.error(f"Error in {func.__name__}", error=str(e))
                span.record_exception(e)
                raise

    return wrapper
