"""Resilience evaluation of networked control systems under actuator attacks."""
__version__ = "0.1.0"
