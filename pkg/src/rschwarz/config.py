"""Process-wide settings read from the environment or a .env file."""

from decouple import config

from rschwarz.core.logging.telemetry import TelemetryConfig

# -- Execution --
MAX_WORKERS: int = config("MAX_WORKERS", default=1, cast=int)

# -- Debugging and Logging Configurations --
ENABLE_LOGGING: bool = config("ENABLE_LOGGING", default=False, cast=bool)
LOG_LEVEL = config("LOG_LEVEL", "INFO")
LOGGING_DIR = config("LOGGING_DIR", "logs")

OTEL_SERVICE_NAME = config("OTEL_SERVICE_NAME", "otel-rschwarz")
OTEL_FILE_NAME = config("OTEL_FILE_NAME", "rschwarz_stages.jsonl")
OTEL_ENABLE_FILE: bool = config("OTEL_ENABLE_FILE", default=False, cast=bool)


TELEMETRY = TelemetryConfig(
    OTEL_SERVICE_NAME,
    LOGGING_DIR,
    OTEL_FILE_NAME,
    OTEL_ENABLE_FILE,
)
TELEMETRY.setup_tracing()
