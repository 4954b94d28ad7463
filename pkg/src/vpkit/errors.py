"""Shared exception types."""


class VpkitError(Exception):
    """Base class for toolkit errors."""


class AudioFormatError(VpkitError):
    """Unreadable or unsupported audio input."""


class StabilityError(VpkitError):
    """Synthesis filter output exceeded the runaway threshold."""


class PlanError(VpkitError):
    """Invalid or unsupported evaluation plan."""


class StageError(VpkitError):
    """An evaluation stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage!r}: {message}")
        self.stage = stage
