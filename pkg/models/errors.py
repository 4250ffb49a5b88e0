# -------------------------------------------------
# models/errors.py
# -------------------------------------------------
# TLS Loss Lab - Error Types
# Every failure the engines and the CLI can report, each with
# the process exit code the CLI maps it to.
# -------------------------------------------------


class SimulationError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(SimulationError, ValueError):
    """Invalid parameters or configuration; message names the offending field(s)."""

    exit_code = 2

    def __init__(self, message: str, fields: dict | None = None):
        self.fields = dict(fields or {})
        if self.fields:
            detail = "; ".join(f"{k}: {v}" for k, v in self.fields.items())
            message = f"{message} ({detail})"
        super().__init__(message)


class DimensionMismatch(SimulationError, ValueError):
    exit_code = 1


class TruncationError(SimulationError):
    """Fock truncation too small for the requested state or evolution."""

    exit_code = 3


class IntegratorError(SimulationError):
    """Step-size underflow, step budget exhausted, or a non-physical state."""

    exit_code = 4


class OracleCapExceeded(SimulationError):
    exit_code = 2


class DegenerateEigenproblem(SimulationError):
    """Eigenvector basis too ill-conditioned for an exact modal solution."""

    exit_code = 4


class EstimatorError(SimulationError):
    exit_code = 5


class WindowTooShort(EstimatorError):
    pass


class NonMonotoneDecay(EstimatorError):
    pass
