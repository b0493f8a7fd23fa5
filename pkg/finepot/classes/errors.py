"""Exception types shared by the library and the command line."""


class FinepotError(Exception):
    """Base class; carries the process exit code used by the CLI."""

    exit_code = 1
    kind = "error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        data = {"error": self.message, "kind": self.kind, "exit_code": self.exit_code}
        for key, value in self.details.items():
            if isinstance(value, (str, int, float, bool, list)) or value is None:
                data[key] = value
        return data


class ConfigError(FinepotError):
    """Scenario or environment configuration could not be parsed or validated."""

    exit_code = 2
    kind = "config"


class PreconditionError(FinepotError):
    """An operation was called with inputs violating its precondition."""

    exit_code = 3
    kind = "precondition"


class ConvergenceError(FinepotError):
    """A solver hit its iteration cap or stalled above tolerance; the last iterate is kept for diagnosis."""

    exit_code = 4
    kind = "convergence"

    def __init__(self, message: str, last_iterate=None, iterations: int = 0,
                 residual: float = float("nan"), **details):
        super().__init__(message, iterations=iterations, residual=residual, **details)
        self.last_iterate = last_iterate
        self.iterations = iterations
        self.residual = residual
