"""Exception types raised across leglab.

Every error derives from LeglabError so callers (and the CLI) can catch the
whole family at once. Some carry diagnostics that are useful for reports.
"""


class LeglabError(Exception):
    """Base class for all library errors."""


class PreconditionViolation(LeglabError, ValueError):
    """An operation was called with inputs outside its contract."""


# laurent
class RationalReexpansionFailure(LeglabError):
    """Partial-fraction re-expansion of a product would lose too much precision."""


class NonexactForm(LeglabError):
    """A one-form has residues, so no single-valued primitive exists."""

    def __init__(self, residues):
        self.residues = dict(residues)
        items = ", ".join(f"{c}: {r:.3e}" for c, r in self.residues.items())
        super().__init__(f"one-form is not exact; residues {{{items}}}")


class CycleThroughPole(LeglabError):
    pass


class QuadratureNotConverged(LeglabError):
    def __init__(self, msg, value=None, error=None):
        super().__init__(msg)
        self.value = value
        self.error = error


class EvalAtPole(LeglabError):
    pass


# geometry
class NoPathFound(LeglabError):
    pass


# contact
class MismatchedJets(LeglabError):
    pass


# approx
class InfeasibleConstraints(LeglabError):
    pass


class BasisTooSmall(LeglabError):
    pass


class ConstantDerivative(LeglabError):
    pass


class NoValidDelta(LeglabError):
    pass


class NoSeparation(LeglabError):
    pass


# spray
class ConditioningFailure(LeglabError):
    pass


class DegenerateDy1(LeglabError):
    pass


class DerivativeNotNearIdentity(LeglabError):
    def __init__(self, msg, deviation=None):
        super().__init__(msg)
        self.deviation = deviation


class SingularSystem(LeglabError):
    pass


class NewtonDiverged(LeglabError):
    pass


class ZeroCrossing(LeglabError):
    pass


class SearchExhausted(LeglabError):
    """The randomized embedding search found no certified candidate.

    ``best`` is the best curve tried (by certificate margin) and ``diagnostics``
    a JSON-friendly dict with the search trace.
    """

    def __init__(self, msg, best=None, diagnostics=None):
        super().__init__(msg)
        self.best = best
        self.diagnostics = diagnostics or {}


# pipeline
class DegenerateArcIntegral(LeglabError):
    pass


class FloorViolated(LeglabError):
    pass


class SectorCoverFailure(LeglabError):
    pass


class BudgetCollapse(LeglabError):
    pass


class JunctionMismatch(LeglabError):
    pass


class NotProperOnData(LeglabError):
    pass
