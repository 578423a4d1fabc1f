"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`MetastableError`, so callers (and the command line) can separate
data problems from programming errors.
"""


class MetastableError(Exception):
    """Base class for all library errors."""


class NonStochastic(MetastableError):
    """A kernel row does not sum to one, or has negative entries."""


class NotReversible(MetastableError):
    """Detailed balance fails for the supplied or computed measure."""


class NotIrreducible(MetastableError):
    """The off-diagonal support graph of the kernel is disconnected."""


class NotIrreducibleRestricted(MetastableError):
    """The reflected chain on a subset or on its complement is reducible."""


class SingularSystem(MetastableError):
    """A linear system that should be nonsingular could not be solved."""


class SurvivalUnderflow(MetastableError):
    """Survival probability too small to condition on."""


class MonotonicityViolation(MetastableError):
    """A quantity that must be monotone along a sweep is not."""


class NotUnitFlow(MetastableError):
    """A test flow does not carry unit current from source to sink."""


class FlowOffSupport(MetastableError):
    """A test flow uses an edge of zero conductance."""


class Inapplicable(MetastableError):
    """The hypotheses of a bound are not met."""


class XiTooLarge(Inapplicable):
    """The thermalization envelope requires xi < 1."""


class BadPartition(MetastableError):
    """Blocks do not partition the state space or are reducible."""


class StepBudgetExceeded(MetastableError):
    """A simulated trajectory exceeded its ring budget."""


class TooLarge(MetastableError):
    """Requested model is too large to build explicitly."""


class NoDoubleWell(MetastableError):
    """Curie-Weiss parameters outside the double-well regime."""


class BadGeometry(MetastableError):
    """Invalid wasp-graph dimensions or jump rate."""
