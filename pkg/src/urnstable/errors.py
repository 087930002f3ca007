"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A parameter lies outside its documented domain."""


class NumericalError(RuntimeError):
    """A quadrature or factorisation did not reach the requested accuracy."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnsupportedLawError(ValueError):
    """The mark law lacks a feature required by the caller."""


class DecompositionUnavailable(ValueError):
    """The U1/U2 split is undefined because beta >= alpha."""
