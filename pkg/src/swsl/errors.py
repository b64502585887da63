class DataError(ValueError):
    """Invalid input data, configuration or file contents."""


class SolverError(RuntimeError):
    """A numerical routine failed to produce a usable result.

    ``diagnostics`` carries whatever the failing routine knew at the time
    (iteration counts, residuals, last objective value).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
