"""Mission planning, telemetry fusion and propagation analysis for UAV radio campaigns."""

__version__ = "0.1.0"
