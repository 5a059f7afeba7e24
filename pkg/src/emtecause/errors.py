"""Error types shared across the package.

ConfigError covers malformed config files and bad CLI usage; DataError
covers unreadable, corrupt or inconsistent datasets and record files.
The CLI maps them to distinct exit codes.
"""


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass
