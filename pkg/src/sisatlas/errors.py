"""Exception hierarchy shared by every solver and the CLI."""


class AtlasError(Exception):
    """Base class for all library errors."""


class ConfigError(AtlasError, ValueError):
    """Invalid user input: bad grid, coefficients, parameters or config file."""


class DomainError(ConfigError):
    """A quantity was requested outside the region where it exists.

    Raised for example for ``l <= l*`` (no positive logistic solution) or a
    limiting branch requested in a regime where it does not exist.
    """


class SolverError(AtlasError, RuntimeError):
    """A numerical method failed to converge or produced an inadmissible result."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
