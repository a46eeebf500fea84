"""Exception hierarchy shared across the engine.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
DivergenceError / BankruptcyError -> 4.
"""


class StatArbError(Exception):
    """Base class for all engine errors."""


class ConfigError(StatArbError):
    """Invalid or inconsistent run configuration."""


class InsufficientWindowError(ConfigError):
    """A window is too short for the requested estimation (n <= d, W <= r+1, ...)."""


class DataError(StatArbError):
    """Malformed or unusable input data."""


class ParseError(DataError):
    """A row of an input file failed to parse; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MissingTickerError(DataError):
    """A requested ticker is not present in the input data."""


class AlignmentError(DataError):
    """Series cannot be aligned onto a common calendar."""


class SingularDesignError(DataError):
    """Regression design matrix is rank deficient or ill conditioned."""


class DegenerateSeriesError(StatArbError):
    """A series has no variance where variance is required."""


class NonMeanRevertingError(StatArbError):
    """AR(1) coefficient outside (0, 1); no valid mean-reversion parameters."""


class ContractError(StatArbError):
    """An internal invariant was violated; indicates an engine bug."""


class DivergenceError(StatArbError):
    """Numerical divergence (NaN loss or gradients) during training."""


class BankruptcyError(StatArbError):
    """Equity dropped to zero or below; simulation halted."""
