"""Exception types shared across the toolkit."""


class PlugProbeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PlugProbeError):
    """Invalid configuration value or unknown config key."""


class EmptyInput(PlugProbeError):
    """An operation received an empty sample array."""


class LengthMismatch(PlugProbeError):
    """Paired arrays differ in length."""


class ShapeMismatch(PlugProbeError):
    """An array does not have the shape required by the operation."""


class NonConvergence(PlugProbeError):
    """The per-sample circuit solve failed to reach tolerance.

    Usually a sign of an unstable load parameterization.
    """


class NumericalOverflow(PlugProbeError):
    """A load state variable left its invariant bounds."""


class NonPositiveScale(PlugProbeError):
    """Feature scaling divisor must be strictly positive."""


class EmptyLabelSet(PlugProbeError):
    """A label set must contain at least one load class."""


class TooManyLabels(PlugProbeError):
    """A label set may contain at most three load classes."""


class InsufficientSamples(PlugProbeError):
    """A combination does not have enough samples for the requested split."""

    def __init__(self, combo_id: str, needed: int, available: int):
        self.combo_id = combo_id
        self.needed = needed
        self.available = available
        super().__init__(
            f"combination '{combo_id}' has {available} samples, {needed} required"
        )


class SchemaVersionMismatch(PlugProbeError):
    """A persisted file declares an unsupported schema version."""


class CorruptRecord(PlugProbeError):
    """A persisted file contains an unreadable record."""

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"corrupt record at line {line_number}: {reason}")


class DivergedToNaN(PlugProbeError):
    """Training produced non-finite parameters (learning rate too high)."""


class SimulationError(PlugProbeError):
    """A simulation failed; carries the offending combination id."""

    def __init__(self, combo_id: str, cause: Exception):
        self.combo_id = combo_id
        self.cause = cause
        super().__init__(f"simulation failed for '{combo_id}': {cause}")
