"""Internal utilities for the stochastic CNS scripts."""

import structlog

from .errors import CnsError, ConfigError, StepError
from .output import configure_logging, emit, error_response, write_log

# Library callers that never configure structlog get WARNING and above on stderr
if not structlog.is_configured():
    configure_logging(verbose=False)

__all__ = ["CnsError", "ConfigError", "StepError", "configure_logging", "emit", "error_response", "write_log"]
