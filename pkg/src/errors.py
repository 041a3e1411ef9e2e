"""Exception hierarchy shared by every module.

DomainError maps to exit status 2 in the CLI, InputError to exit status 1.
"""


class OrliczRiskError(Exception):
    """Base class for all errors raised by the engine."""


class DomainError(OrliczRiskError):
    """The input is well-formed but mathematically outside the operation's domain."""


class InputError(OrliczRiskError):
    """The input could not be read or parsed."""


class NotInOrliczSpaceError(DomainError):
    def __init__(self, detail: str = ""):
        msg = "not in L^Phi"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class DivergentIntegralError(DomainError):
    """Quadrature grows without bound: the integrand is not integrable."""


class ConjugateOverflowError(DomainError):
    """The conjugate supremum is effectively infinite at the requested point."""


class DimensionMismatchError(DomainError):
    pass


class NonComparableSupportsError(DomainError):
    pass


class EmptyEffectiveDomainError(DomainError):
    def __init__(self):
        super().__init__("empty effective domain")


class EmptyAcceptanceError(DomainError):
    def __init__(self):
        super().__init__("empty acceptance intersection")


class ChainNotNestedError(DomainError):
    pass


class NumericalInvariantError(DomainError):
    """A numeric invariant asserted during a computation did not hold."""


class DescriptorError(InputError):
    pass


class SchemaError(InputError):
    pass


class QuadratureSettingError(InputError, ValueError):
    """A quadrature setting (gridpoints, tail_split) outside the range the rule supports."""
