"""Exception types shared across the package."""


class GridBatchError(Exception):
    """Base class for all package-specific errors."""


class DegenerateData(GridBatchError):
    """Input data cannot support the requested fit."""


class NoConvergence(GridBatchError):
    """An iterative procedure exhausted its budget without converging."""


class ParseError(GridBatchError):
    """A file could not be parsed; message carries line number and reason."""


class SchemaError(GridBatchError):
    """A structured file is missing required columns or keys."""


class ValidationError(GridBatchError):
    """Parsed data violates a documented invariant."""


class EmptyTrace(GridBatchError):
    """A trace summary was requested on an empty series."""


class UnknownModel(GridBatchError):
    """A batch map references a model that is not deployed."""


class BatchOutOfRange(GridBatchError):
    """A requested batch size falls outside the deployment's bounds."""


class InvalidWindow(GridBatchError):
    """A workload event has a non-positive time window."""


class DimensionMismatch(GridBatchError):
    """Vector dimensions disagree with the controller state."""


class NonRadial(GridBatchError):
    """The feeder line graph is not a tree rooted at the source."""


class EmptyStream(GridBatchError):
    """Metrics were requested on an empty record stream."""


class ConfigError(GridBatchError):
    """A scenario or feeder configuration failed validation."""
