"""Exception types shared across the package."""


class PreconditionError(ValueError):
    """A mathematical precondition of an operation does not hold.

    ``code`` is a short machine-readable tag (for example
    ``"lemma-inapplicable"`` or ``"xi-divergent"``); ``details`` carries the
    failing inequality and its numbers.
    """

    def __init__(self, code, message, details=None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.details = dict(details or {})


class NotInConeError(ValueError):
    """A vector that must be a cone member is not; ``report`` explains why."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
