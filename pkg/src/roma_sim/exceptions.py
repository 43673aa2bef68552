"""Exception hierarchy shared by every roma_sim module."""


class RomaSimError(Exception):
    """Base class for errors raised by roma_sim."""


class InvalidArgumentError(RomaSimError, ValueError):
    """An argument is outside its documented domain."""


class InfeasibleProblemError(RomaSimError):
    """The geometric constraints admit no feasible placement."""


class DegenerateChannelError(RomaSimError, ValueError):
    """A channel is identically zero where a non-zero one is required."""


class GradientFailureError(RomaSimError, FloatingPointError):
    """A finite-difference gradient hit a non-finite function value."""


class ConfigError(RomaSimError, ValueError):
    """A configuration file could not be parsed or validated."""
