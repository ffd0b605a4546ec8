"""Exception hierarchy shared by the simulator modules and scripts."""

from __future__ import annotations

from typing import Any

EXIT_VERDICT_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


class CnsError(Exception):
    """Base error carrying a machine-readable type and optional details."""

    error_type = "runtime_error"
    exit_code = EXIT_RUNTIME_ERROR

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ConfigError(CnsError):
    """Invalid or unreadable run configuration."""

    error_type = "config_error"
    exit_code = EXIT_CONFIG_ERROR


class GridError(CnsError):
    """The requested grid cannot be built; a configuration problem."""

    error_type = "grid_error"
    exit_code = EXIT_CONFIG_ERROR


class StateError(CnsError):
    """A state violates positivity, mass, boundary or size constraints."""

    error_type = "invalid_state"


class NoiseError(CnsError):
    error_type = "noise_error"


class StepError(CnsError):
    """Failure while advancing a state by one time step."""

    error_type = "step_error"

    def __init__(
        self,
        message: str,
        step: int | None = None,
        cell: int | None = None,
        trajectory_id: int | None = None,
        details: dict[str, Any] | None = None,
    ):
        merged = dict(details or {})
        if step is not None:
            merged["step"] = step
        if cell is not None:
            merged["cell"] = cell
        if trajectory_id is not None:
            merged["trajectory_id"] = trajectory_id
        super().__init__(message, merged)
        self.step = step
        self.cell = cell
        self.trajectory_id = trajectory_id

    def at(self, step: int | None = None, trajectory_id: int | None = None) -> "StepError":
        """Return a copy annotated with the step index and/or trajectory id."""
        return StepError(
            self.message,
            step=self.step if step is None else step,
            cell=self.cell,
            trajectory_id=self.trajectory_id if trajectory_id is None else trajectory_id,
            details={k: v for k, v in self.details.items() if k not in ("step", "cell", "trajectory_id")},
        )


class ReportError(CnsError):
    """A statistical report cannot be formed from the given inputs."""

    error_type = "report_error"


class CheckpointError(CnsError):
    error_type = "checkpoint_error"
