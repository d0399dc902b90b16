"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Malformed or out-of-range experiment configuration."""


class SolverError(RuntimeError):
    """An iterative solve did not reach its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
