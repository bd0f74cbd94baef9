"""Exception hierarchy; the CLI maps each class to an exit code."""


class AdaptError(Exception):
    exit_code = 1


class InputError(AdaptError, ValueError):
    """Bad argument or configuration value."""

    exit_code = 1


class FormatError(AdaptError, ValueError):
    """Malformed phrase table, ARPA file or model container."""

    exit_code = 2

    def __init__(self, message: str, lineno: int | None = None) -> None:
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class NormalizationError(AdaptError, ArithmeticError):
    """Back-off renormalization or training hit a numerical dead end."""

    exit_code = 3
