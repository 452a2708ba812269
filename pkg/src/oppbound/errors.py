"""Exception hierarchy shared by all modules."""


class OppError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidDesign(OppError, ValueError):
    """A level set, device, design or pattern violates a structural precondition."""


class DegenerateLoad(OppError, ValueError):
    """The load has neither resistance nor inductance."""


class InconsistentInputs(OppError, ValueError):
    """Numerical inputs contradict each other beyond tolerance."""


class WrongRegime(OppError, ValueError):
    """A closed-form energy routine was called outside its damping regime."""


class NoPeriodicSolution(OppError, ValueError):
    """The lossless current has no periodic steady state (nonzero mean voltage)."""


class GraphMismatch(OppError, ValueError):
    """A pattern or dwell table does not live on the given transition graph."""


class ExtractionError(OppError, ValueError):
    """Greedy extraction could not produce a pattern from a dwell table."""


class ConfigurationError(OppError, ValueError):
    """The requested relaxation cannot be assembled for this configuration."""


class InfeasiblePattern(OppError, ValueError):
    """A pattern fails the constraints required by an operation."""


class SolutionFormatError(OppError, ValueError):
    """A solver output file is unparseable or does not match the problem."""


class SolverFailure(OppError, RuntimeError):
    """The external SDP solver exited abnormally or produced no output."""
