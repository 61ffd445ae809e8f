"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of a formula."""


class ContractViolation(ValueError):
    """A caller broke a precondition (wrong frame tag, bad sector, ...)."""


class ConfigError(ValueError):
    """A scenario configuration value is missing or invalid."""


class SimulationDivergence(RuntimeError):
    """The closed-loop simulation produced a non-finite state."""

    def __init__(self, step, t):
        self.step = int(step)
        self.t = float(t)
        super().__init__(f"non-finite state at control step {self.step} (t = {self.t:.6f} s)")


class OutputError(OSError):
    """Writing a result file failed; the message names the path."""
