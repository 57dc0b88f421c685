"""Exception hierarchy shared by every app of the detection backend."""


class BagodError(Exception):
    """Base class for all detection backend errors."""


class ConfigurationError(BagodError, ValueError):
    """A domain value or configuration entry is out of its valid range."""


class ScenarioError(BagodError):
    """A scenario cannot be generated or synthesized as requested."""


class SolverError(BagodError):
    """A solver was called outside its contract."""


class ConvergenceError(SolverError):
    """Raised when a caller demands convergence and the solver did not reach it."""
