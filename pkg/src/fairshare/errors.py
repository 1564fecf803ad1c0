"""Exception hierarchy.

Two families matter to callers: ordinary input/usage errors, and
``Falsification`` errors, raised when a checked mathematical claim fails on a
concrete instance.  The CLI maps the latter to a distinct exit code.
"""


class FairshareError(Exception):
    """Base class for every error raised by this package."""


class DivisionByZero(FairshareError, ZeroDivisionError):
    pass


class MalformedLP(FairshareError, ValueError):
    pass


class IndexOutOfRange(FairshareError, IndexError):
    pass


class InvalidValuation(FairshareError, ValueError):
    pass


class InvalidInstance(FairshareError, ValueError):
    pass


class TooLarge(FairshareError):
    """The exhaustive method requested does not fit desk scale."""


class ParameterTooLarge(TooLarge):
    pass


class SearchSpaceTooLarge(TooLarge):
    pass


class HypothesisViolated(FairshareError, ValueError):
    """Input does not satisfy the hypotheses of the checked statement."""


class Unsplittable(FairshareError, ValueError):
    pass


class IllegalBid(FairshareError):
    def __init__(self, agent, message):
        super().__init__(f"agent {agent}: {message}")
        self.agent = agent


class IllegalSelection(FairshareError):
    def __init__(self, agent, message):
        super().__init__(f"agent {agent}: {message}")
        self.agent = agent


class Falsification(FairshareError):
    """A checked claim failed on a concrete instance."""


class RelationViolated(Falsification):
    pass


class TheoremViolated(Falsification):
    pass


class LemmaViolated(Falsification):
    pass


class BoundViolated(Falsification):
    pass


class GuaranteeViolated(Falsification):
    pass


class StrategyFailed(Falsification):
    pass


class StepBudgetExhausted(Falsification):
    pass
