"""Exception types shared across the package."""


class FheflError(Exception):
    """Base class for all package-specific failures."""


class ParameterError(FheflError):
    """Invalid ring/scheme parameters or unknown preset."""


class DomainError(FheflError):
    """Operation received an element in the wrong representation (NTT vs coefficient)."""


class LevelError(FheflError):
    """Level/scale mismatch or exhausted modulus chain."""


class EncodingError(FheflError):
    """Value does not fit the fixed-point encoding at the current modulus."""


class SerializationError(FheflError):
    """Malformed, truncated, or mismatched serialized payload."""


class ProtocolError(FheflError):
    """Multi-party protocol violation (roster, duplicate/missing shares, failed checks)."""


class TrainingDiverged(FheflError):
    """Local training produced non-finite loss or weights."""
