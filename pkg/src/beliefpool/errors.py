"""Exception hierarchy shared across the package."""


class BeliefPoolError(Exception):
    """Base class for all package errors."""


class CycleError(BeliefPoolError):
    pass


class ValidationError(BeliefPoolError):
    """Raised with every violation found, not just the first."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class StateSpaceTooLarge(BeliefPoolError):
    pass


class UnknownVariable(BeliefPoolError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ScopeMismatch(BeliefPoolError):
    pass


class VariableMismatch(BeliefPoolError):
    pass


class EmptyDataSet(BeliefPoolError):
    pass


class WeightError(BeliefPoolError):
    pass


class MissingPriorInfo(BeliefPoolError):
    pass


class DegenerateCounts(BeliefPoolError):
    pass


class MissingSourceVariable(BeliefPoolError):
    pass


class ParseError(BeliefPoolError):
    """File-format error; ``location`` names the line or field."""

    def __init__(self, message, location=None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)
