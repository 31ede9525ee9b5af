"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for malformed input, 3 for domain errors, 4 for numerical failures.
"""


class FpemuError(Exception):
    exit_code = 3


class InputError(FpemuError):
    exit_code = 2


class SchemaError(InputError):
    pass


class VersionMismatch(InputError):
    pass


class DomainError(FpemuError):
    exit_code = 3


class DimensionMismatch(DomainError):
    pass


class NonDifferentiableKernel(DomainError):
    pass


class CoincidentAtoms(DomainError):
    pass


class TooManyAtoms(DomainError):
    pass


class AtomCountMismatch(DomainError):
    pass


class NonOrthonormalBasis(DomainError):
    pass


class ZeroRadius(DomainError):
    pass


class NumericalError(FpemuError):
    exit_code = 4


class NotPositiveDefinite(NumericalError):
    pass


class SingularCorrelation(NotPositiveDefinite):
    pass


class SingularCovariance(NotPositiveDefinite):
    pass


class ConvergenceFailure(NumericalError):
    pass


class AllStartsFailed(NumericalError):
    pass


class OptimizationFailure(NumericalError):
    pass


class RankDeficiency(NumericalError):
    pass


class NonFiniteLocalEnergy(NumericalError):
    pass


class TuningFailure(NumericalError):
    pass
