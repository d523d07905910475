"""Exception hierarchy shared by all perikdv modules."""


class PerikdvError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(PerikdvError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


# -- constitutive ----------------------------------------------------------

class AssumptionViolated(PerikdvError):
    """A constitutive model breaks the positivity/integrability requirements."""


class NegativeMoment(AssumptionViolated):
    pass


class NonIntegrable(PerikdvError):
    pass


# -- operators / kdv -------------------------------------------------------

class QuadratureInsufficient(PerikdvError):
    pass


class RemainderBoundExceeded(PerikdvError):
    """The remainder force was evaluated outside |r| <= 1."""


class DomainTooSmall(PerikdvError):
    pass


# -- solver ----------------------------------------------------------------

class SolverError(PerikdvError):
    pass


class InnerSolveStalled(SolverError):
    def __init__(self, message, min_ritz=None, iterations=None):
        self.min_ritz = min_ritz
        self.iterations = iterations
        if min_ritz is not None:
            message = f"{message} (smallest |Ritz value| {min_ritz:.3e})"
        super().__init__(message)


class NotContracting(SolverError):
    pass


class LeftTrustRegion(SolverError):
    pass


class NotConverged(SolverError):
    pass


class FormMismatch(SolverError):
    pass


# -- dynamics --------------------------------------------------------------

class DynamicsError(PerikdvError):
    pass


class ResolutionTooCoarse(DynamicsError):
    pass


class DomainMismatch(DynamicsError):
    pass


class BlowUp(DynamicsError):
    pass


class InsufficientTranslation(DynamicsError):
    pass
