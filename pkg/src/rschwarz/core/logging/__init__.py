"""Solver logging with Loguru, OpenTelemetry spans and Rich rendering."""
