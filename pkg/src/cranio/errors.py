"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so raise the most specific
one available: ConfigError for bad configuration/arguments, DataError for
malformed or missing inputs, NumericsError for divergence and non-finite
values detected during optimization.
"""


class CranioError(Exception):
    pass


class ConfigError(CranioError):
    pass


class DataError(CranioError):
    pass


class NumericsError(CranioError):
    pass
