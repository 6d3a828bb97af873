"""Exception hierarchy.

Each class carries the process exit code the CLI reports for it.
"""


class LTSError(Exception):
    exit_code = 3
    kind = "runtime"


class ConfigError(LTSError, ValueError):
    exit_code = 1
    kind = "config"


class DataError(LTSError, ValueError):
    exit_code = 2
    kind = "data"


class ShapeError(LTSError, ValueError):
    """Tensor shapes violate a module contract."""

    exit_code = 3
    kind = "shape"


class TrainingDivergedError(LTSError, RuntimeError):
    exit_code = 3
    kind = "nan"

    def __init__(self, message, batch_indices=None, components=None):
        super().__init__(message)
        self.batch_indices = list(batch_indices or [])
        self.components = dict(components or {})
