"""Exception taxonomy shared across modules (mapped to CLI exit codes)."""


class DomainRejectionError(ValueError):
    """Input is outside the supported domain (bad spectrum, supercritical, degenerate gap)."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance within its iteration cap."""
