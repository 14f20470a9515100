"""Error taxonomy shared by all modules."""


class DistillError(Exception):
    """Base class for all package errors."""


class StructuralError(DistillError):
    """Shape or wiring mismatch (wrong channel count, non-scalar root, ...)."""


class DegenerateInputError(DistillError):
    """Input too small for the requested statistic (T < 2, empty positives)."""


class NumericalError(DistillError):
    """Non-finite values or tolerance violations during computation."""


class ConfigError(DistillError):
    """Invalid or inconsistent configuration."""


class FormatError(DistillError):
    """Malformed on-disk file (bad magic, truncation, dim mismatch)."""


class PairingError(DistillError):
    """No valid contrastive pairing exists for some video."""
