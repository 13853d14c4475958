class ParameterError(ValueError):
    """A solver or generator was called with arguments outside its domain."""


class InputError(ValueError):
    """Malformed or out-of-bounds data in an input file."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NumericalError(ArithmeticError):
    """A factorization failed even after diagonal regularization."""
