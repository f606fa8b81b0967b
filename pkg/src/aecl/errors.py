"""Exception taxonomy shared by the library and the CLI.

The CLI maps ConfigError to exit code 2, DataError to exit code 3 and any
other failure to exit code 1.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad flag values, inconsistent stage budgets."""


class DataError(ValueError):
    """Invalid input data: unparsable files, shape mismatches, bad checkpoints."""
