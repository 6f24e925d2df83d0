"""
Exception hierarchy for the contrail simulator.

Every error carries the exit code the CLI reports for it.
"""


class ContrailError(Exception):
    """Root of all contrail errors."""

    exit_code = 2


class ValidationError(ContrailError, ValueError):
    """Inputs outside their declared ranges."""

    exit_code = 1


class DomainError(ValidationError):
    """A formula evaluated outside the domain where it is defined."""


class TaskLookupError(ContrailError, KeyError):
    """A task identifier that the knowledge base does not hold."""

    exit_code = 1

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class StateError(ContrailError):
    """Knowledge-base state that an operation cannot proceed from."""

    exit_code = 1


class TrainingError(ContrailError):
    """Training diverged or failed to decrease the loss."""

    exit_code = 2

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class ReportIOError(ContrailError, OSError):
    """A report, sample or snapshot file could not be written or read."""

    exit_code = 3
