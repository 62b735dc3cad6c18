"""Exception hierarchy shared by all lexirec modules."""


class LexirecError(Exception):
    """Base class for every error raised by this package."""


class DataError(LexirecError):
    """Problems with input data: unreadable, malformed or inconsistent."""


class ParseError(DataError):
    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class ValidationError(DataError):
    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DivergenceError(LexirecError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class SearchError(LexirecError):
    """Every hyperparameter trial failed."""

    def __init__(self, configs):
        self.configs = list(configs)
        listing = "; ".join(repr(c) for c in self.configs)
        super().__init__(f"all {len(self.configs)} trials diverged: {listing}")
