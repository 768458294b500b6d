"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent dimensions, invalid parameters or malformed configuration."""


class SimulationDiverged(RuntimeError):
    """A simulated state became non-finite or exceeded the divergence threshold.

    Divergence is a legitimate outcome of experiments run above the sampling
    bound, so callers are expected to catch this and record it.
    """

    def __init__(self, time, trajectory=None):
        super().__init__(f"simulation diverged at t = {time:.17g}")
        self.time = time
        self.trajectory = trajectory


class MASPError(ValueError):
    """A sampling diameter violates the condition required by a stability bound."""

    def __init__(self, message, lhs=None):
        super().__init__(message)
        self.lhs = lhs
