"""This module sets up OpenTelemetry tracing for the solver stages."""

import sys

from opentelemetry import trace
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import SimpleSpanProcessor

from rschwarz.core.logging.telemetry_exporter.stage_exporter import (
    StageSpanExporter,
)


class TelemetryConfig:
    """This configuration class sets up OpenTelemetry tracing.

    Spans are always created so that stage boundaries are visible to any
    externally installed processor. When file export is enabled, every
    finished span is also appended as one JSON line to
    ``<local_logging_dir>/<file_export_name>``.
    """

    def __init__(
        self,
        service_name: str,
        local_logging_dir: str | None = None,
        file_export_name: str | None = None,
        enable_file: bool = False,
    ):
        """Store the tracing settings.

        Args:
            service_name: Name reported as ``service.name``.
            local_logging_dir: Directory for the span file.
            file_export_name: File name of the JSON-lines span log.
            enable_file: Whether the span file exporter is installed.
        """
        self.service_name = service_name
        self.local_logging_dir = local_logging_dir
        self.file_export_name = file_export_name
        self.enable_file = enable_file
        self.global_tracer = None

    def setup_tracing(self):
        """Install the tracer provider and the configured exporters."""
        resource = Resource(attributes={"service.name": self.service_name})
        provider = TracerProvider(resource=resource)
        trace.set_tracer_provider(provider)

        if (
            self.enable_file
            and self.file_export_name
            and self.local_logging_dir
        ):
            exporter = StageSpanExporter(
                self.local_logging_dir, self.file_export_name
            )
            provider.add_span_processor(SimpleSpanProcessor(exporter))

        self.global_tracer = trace.get_tracer("rschwarz")
        sys.excepthook = self.log_exception_to_otel

    def log_exception_to_otel(self, exc_type, exc_value, exc_traceback):
        """Log unhandled exceptions to OpenTelemetry."""
        if issubclass(exc_type, KeyboardInterrupt):
            sys.__excepthook__(exc_type, exc_value, exc_traceback)
            return

        with self.global_tracer.start_as_current_span(
            "UnhandledException"
        ) as span:
            span.record_exception(exc_value)
            span.set_status(
                trace.Status(trace.StatusCode.ERROR, str(exc_value))
            )
        sys.__excepthook__(exc_type, exc_value, exc_traceback)
