"""Exception hierarchy.

Every error raised by the library derives from :class:`DynvarError`, which is a
``ValueError`` so callers that only care about bad input can catch that.
"""


class DynvarError(ValueError):
    pass


# core
class DimensionMismatch(DynvarError):
    pass


class NotHermitian(DynvarError):
    pass


class NotPositiveDefinite(DynvarError):
    pass


class TraceNotOne(DynvarError):
    pass


# forms
class NotAOneForm(DynvarError):
    pass


class NotATwoForm(DynvarError):
    pass


# generators
class DomainViolation(DynvarError):
    pass


class InvalidMomentumSpace(DynvarError):
    pass


class InvalidPotential(DynvarError):
    pass


class NotADerivation(DynvarError):
    pass


class ReconstructionMismatch(DynvarError):
    pass


class CommutantTooSmall(DynvarError):
    pass


# cohomology
class UnsupportedDimension(DynvarError):
    pass


class NotACochain(DynvarError):
    pass


class InternalInconsistency(DynvarError):
    pass


# invariants
class NotElliptic(DynvarError):
    pass


class NotExact(DynvarError):
    pass


class SingularPairing(DynvarError):
    pass


class NotKms(DynvarError):
    pass


class SkewExtractionFailure(DynvarError):
    pass


class CommutantViolation(DynvarError):
    pass


class NotUnitary(DynvarError):
    pass


# semigroup
class NegativeTime(DynvarError):
    pass


class NotAState(DynvarError):
    pass


class StateNotInvariant(DynvarError):
    pass


# cli
class ParseError(DynvarError):
    pass


class ConventionMismatch(DynvarError):
    pass


class IncompatibleStateAlgebras(DynvarError):
    pass
