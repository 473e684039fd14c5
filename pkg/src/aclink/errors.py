"""Exception types shared across the package."""


class DomainError(ValueError):
    """A parameter lies outside the domain an operation accepts."""


class ContractViolation(ValueError):
    """An operation was called in a state its contract forbids."""


class DegenerateSystemError(ArithmeticError):
    """A composed system collapsed (e.g. identically-zero denominator)."""


class NumericFailure(RuntimeError):
    """A numerical routine failed to converge or produced non-finite values."""


class SimulationError(RuntimeError):
    """A hybrid simulation could not proceed; carries a state dump."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state or {}

    def __str__(self):
        base = super().__str__()
        if not self.state:
            return base
        dump = ", ".join(f"{k}={v!r}" for k, v in self.state.items())
        return f"{base} [{dump}]"
