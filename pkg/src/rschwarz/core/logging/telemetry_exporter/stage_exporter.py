"""A span exporter that writes solver stage timings as JSON lines."""

import json
from pathlib import Path

from opentelemetry.sdk.trace.export import SpanExporter, SpanExportResult
from opentelemetry.trace import Status, StatusCode


class StageSpanExporter(SpanExporter):
    """Append one JSON object per finished span to a file.

    Each record carries the span name, its wall-clock duration in seconds,
    the status and the span attributes (patch ids, ranks, iteration counts).
    """

    def __init__(self, dir: str, file_path: str = "rschwarz_stages.jsonl"):
        """Initialize the exporter, creating the target directory."""
        super().__init__()
        self.telemetry_path = Path(dir)
        self.telemetry_path.mkdir(parents=True, exist_ok=True)
        self.file_path = self.telemetry_path.joinpath(file_path)

    @staticmethod
    def _span_to_record(span) -> dict:
        context = span.get_span_context()
        status = span.status or Status(StatusCode.UNSET)
        duration = None
        if span.start_time is not None and span.end_time is not None:
            duration = (span.end_time - span.start_time) / 1e9
        return {
            "stage": span.name,
            "trace_id": format(context.trace_id, "032x"),
            "span_id": format(context.span_id, "016x"),
            "seconds": duration,
            "status": status.status_code.name,
            "attributes": dict(span.attributes or {}),
        }

    def export(self, spans) -> SpanExportResult:
        """Write spans to the stage log."""
        try:
            with open(self.file_path, "a") as f:
                for span in spans:
                    f.write(f"{json.dumps(self._span_to_record(span))}\n")
            return SpanExportResult.SUCCESS
        except OSError:
            return SpanExportResult.FAILURE

    def shutdown(self) -> None:
        pass
