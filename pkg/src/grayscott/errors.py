"""Exception hierarchy shared by the solver, the dataset format and the CLI."""


class GrayScottError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 3


class ConfigError(GrayScottError, ValueError):
    exit_code = 2


class DomainError(GrayScottError, ValueError):
    """An argument outside the mathematical domain of an operation."""

    exit_code = 2


class ExchangeError(GrayScottError):
    """Ghost exchange failed; carries rank, face and step context."""

    def __init__(self, message, rank=None, face=None, step=None):
        ctx = []
        if rank is not None:
            ctx.append(f"rank={rank}")
        if face is not None:
            ctx.append(f"face={face}")
        if step is not None:
            ctx.append(f"step={step}")
        if ctx:
            message = f"{message} ({', '.join(ctx)})"
        super().__init__(message)
        self.rank = rank
        self.face = face
        self.step = step


class TransportError(GrayScottError):
    pass


class RunError(GrayScottError):
    """A rank worker failed and the run was aborted."""

    def __init__(self, message, rank=None, cause=None):
        super().__init__(message)
        self.rank = rank
        self.cause = cause

    @property
    def exit_code(self):
        if isinstance(self.cause, GrayScottError):
            return self.cause.exit_code
        if isinstance(self.cause, OSError):
            return 4
        return 3


class FormatError(GrayScottError):
    exit_code = 4


class DatasetLookupError(FormatError, KeyError):
    """Unknown variable, step, or out-of-range plane."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class WriterError(FormatError, OSError):
    """I/O failure while writing a dataset (disk full and friends)."""
