"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: usage/config problems exit 1, data
problems exit 2, numeric problems exit 3.
"""


class ChainFraudError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(ChainFraudError):
    """Invalid or unknown configuration key/value."""


class DataError(ChainFraudError):
    """Malformed, missing, or inconsistent input data."""


class RecordParseError(DataError):
    """Malformed input row; carries the 1-based row number and offending field."""

    def __init__(self, row: int, field: str, message: str):
        super().__init__(f"row {row}, field '{field}': {message}")
        self.row = row
        self.field = field


class UnknownAddressError(DataError):
    """Address missing from the graph index; never silently mapped to zero."""

    def __init__(self, address: str):
        super().__init__(f"address not in index: {address!r}")
        self.address = address


class NumericError(ChainFraudError):
    """Non-finite values, failed gradient checks, or invalid numeric state."""


class ShapeError(NumericError):
    """Operands with incompatible shapes; message names the op and shapes."""
