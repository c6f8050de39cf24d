"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
StageError -> 4.
"""


class GddLinkError(Exception):
    """Base class for all package errors."""


class ConfigError(GddLinkError, ValueError):
    """Invalid configuration, schema or precondition."""


class DataError(GddLinkError, ValueError):
    """Malformed or inconsistent input data."""


class LoadError(DataError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class NotFoundError(GddLinkError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class EvaluationError(GddLinkError):
    """A constraint refers to something absent from the row it is evaluated on."""


class StageError(GddLinkError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
