"""Exception and warning types shared by all modules."""


class AtomprepError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(AtomprepError, ValueError):
    """A parameter lies outside its admissible range."""


class AssumptionViolation(AtomprepError):
    """A standing model assumption fails (integrability, decay, ...)."""


class DegenerateSpectrumError(AtomprepError):
    """Degenerate energies or Bohr frequencies where they are excluded."""


class DecompositionError(AtomprepError):
    """Spectral (Riesz) splitting is not possible for the given operator."""


class StepSizeError(AtomprepError):
    """A propagation step lost unitarity beyond tolerance."""


class GuardError(AtomprepError):
    """A combinatorial or memory guard was exceeded."""


class ConfigError(AtomprepError):
    """Malformed or unknown configuration content."""


class PrecisionWarning(UserWarning):
    """A quadrature could not certify the requested accuracy."""


class RecurrenceWarning(UserWarning):
    """A requested horizon exceeds the mode-discretization recurrence window."""
