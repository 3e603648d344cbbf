"""Exception hierarchy shared by every module of the package."""


class SemError(Exception):
    """Base class for all errors raised by sem_model."""


class InvalidPopulation(SemError, ValueError):
    """Malformed population counts (wrong lengths, negative entries, k < 2)."""


class UnequalTotals(InvalidPopulation):
    """Female and male totals differ."""


class EmptyPopulation(InvalidPopulation):
    """A population with n = 0 was passed where n >= 1 is required."""


class StateSpaceTooLarge(SemError):
    """An enumeration would exceed the configured state-space cap."""


class InvalidIndex(SemError, IndexError):
    """A pair references an animal that is not in the roster."""


class InvalidPreferences(SemError, ValueError):
    """Preference matrix entries outside (0, 1] or wrong shape."""


class InvalidRates(SemError, ValueError):
    """Firing rates violate the flavor's admissibility conditions."""


class InvalidLaw(SemError, ValueError):
    """An EM law matrix violates its flavor's range constraints."""


class NotATable(SemError, ValueError):
    """A matrix does not have the population's margins."""


class FineBalanceViolated(SemError, ValueError):
    """A fine-balance-only formula was called on a law that is not fine-balanced."""


class NotFineBalanced(SemError, ValueError):
    """No additive / multiplicative decomposition exists for the law.

    ``quadruple`` holds the ``(i, j, i2, j2)`` index quadruple with the
    largest violation and ``violation`` its magnitude.
    """

    def __init__(self, message, quadruple=None, violation=None):
        super().__init__(message)
        self.quadruple = quadruple
        self.violation = violation


class WrongDimension(SemError, ValueError):
    """Operation only defined for a specific number of types."""


class InvalidHorizon(SemError, ValueError):
    """Schedule horizon is not positive (or not an integer for Bernoulli)."""


class InvalidSchedule(SemError, ValueError):
    """Explicit firing schedule is not a proper family of firing times."""


class HorizonExhausted(SemError, RuntimeError):
    """An explicit schedule ran out of firings before the singles' pool emptied."""


class DegenerateKernel(SemError, ArithmeticError):
    """The Bernoulli kernel has a self-loop of probability one at a live state."""


class EmptySample(SemError, ValueError):
    """A goodness-of-fit comparison was requested on zero observations."""


class TooLargeForOracle(SemError, ValueError):
    """Brute-force permutation enumeration refused for large n."""
