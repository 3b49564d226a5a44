"""Exception hierarchy shared by all concavlab modules."""


class ConcavlabError(Exception):
    """Base class for every error raised by concavlab."""


class PointOutsideDomain(ConcavlabError):
    pass


class PointTooCloseToBoundary(ConcavlabError):
    pass


class StencilExitsDomain(ConcavlabError):
    pass


class NonpositiveInputValue(ConcavlabError):
    pass


class MalformedHeader(ConcavlabError):
    pass


class ValueCountMismatch(ConcavlabError):
    pass


class EllipticityViolation(ConcavlabError):
    pass


class SolverError(ConcavlabError):
    """Raised when a nonlinear solve cannot produce an admissible solution."""


class NewtonDivergence(SolverError):
    pass


class PositivityLoss(SolverError):
    pass


class BetaOneRejected(ConcavlabError):
    pass


class NeedsTwoResolutions(ConcavlabError):
    pass


class EmptyMask(ConcavlabError):
    pass


class DegenerateHull(ConcavlabError):
    pass


class UndefinedHarmonicConcavity(ConcavlabError):
    pass


class AuditError(ConcavlabError):
    pass


class HypothesisFailure(AuditError):
    pass


class BoundaryMaximum(AuditError):
    pass


class SDomainViolation(AuditError):
    pass


class ConfigError(ConcavlabError):
    pass


class AllCensored(ConcavlabError):
    pass
