"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigurationError -> 2,
DataError -> 3, NumericError -> 4. Plain ValueError is used for
programming-level domain errors (bad argument ranges, shape mismatches).
"""


class ConfigurationError(Exception):
    """A run configuration is inconsistent or infeasible."""


class DataError(Exception):
    """Input data could not be read or does not match its schema."""


class ParseError(DataError):
    """A cell could not be parsed; message names the row and column."""


class SchemaError(DataError):
    """A column or categorical level is missing or unknown."""


class NumericError(Exception):
    """A numerical routine failed beyond recoverable jitter."""
