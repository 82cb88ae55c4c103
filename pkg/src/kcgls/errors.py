"""Exception hierarchy for the kcgls package."""


class KcglsError(Exception):
    """Base class for all kcgls errors."""


class NotPositiveDefinite(KcglsError):
    """A matrix required to be symmetric positive definite is not."""


class NotUnitVector(KcglsError):
    """A vector required to have unit Euclidean norm does not."""


class DegenerateConstraint(KcglsError):
    """The constraint vector is (numerically) orthogonal to the null direction."""


class UnknownParticipant(KcglsError):
    """A constraint weight references a participant not in the roster."""


class SingularReducedSystem(KcglsError):
    """The reduced normal matrix S'X'V0^-1·X·S is not positive definite."""


class SingularAugmentedSystem(KcglsError):
    """The augmented normal matrix X'V0^-1·X + c·ww' is not positive definite."""


class SingularFullCovariance(KcglsError):
    """V0 + X·A·X' is not positive definite."""


class SingularKkt(KcglsError):
    """The bordered KKT system is singular."""


class ZeroVariance(KcglsError):
    """A participant-effect variance underflowed where a z-score was required."""


class InvalidConfig(KcglsError):
    """A simulation configuration violates its invariants."""


class ParseError(KcglsError):
    """An input file could not be parsed at all."""


class SchemaError(KcglsError):
    """An input file parsed but does not match the expected schema."""


class ValidationError(KcglsError):
    """Domain objects violate model invariants.

    Carries the full list of violations so callers can report all of
    them at once rather than one per run.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class IoError(KcglsError):
    """Reading or writing an output file failed."""
