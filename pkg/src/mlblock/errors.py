"""Exception hierarchy.

``DataError`` subclasses describe problems with user inputs (CLI exit code 2),
``ConfigError`` problems with run configuration (exit code 1) and
``InvariantError`` internal contract violations (exit code 3).
"""


class MlblockError(Exception):
    pass


class ConfigError(MlblockError, ValueError):
    pass


class DataError(MlblockError, ValueError):
    pass


class InvariantError(MlblockError, RuntimeError):
    pass


# dataset
class SchemaMismatch(DataError):
    pass


class MissingData(DataError):
    def __init__(self, rows, message=None):
        self.rows = list(rows)
        super().__init__(message or f"missing values in rows {self.rows}")


class NonNumeric(DataError):
    pass


class LeakageError(DataError, KeyError):
    """A design procedure asked for an outcome period that is withheld."""

    def __str__(self):
        return Exception.__str__(self)


class TooFewPeriods(DataError):
    pass


class TooFewUnits(DataError):
    pass


# ml core
class NonStandardized(DataError):
    pass


class DidNotConverge(MlblockError, RuntimeError):
    def __init__(self, message, objective=None):
        self.objective = objective
        super().__init__(message)


class SingularDesign(DataError):
    pass


class EmptyInput(DataError):
    pass


class CannotSatisfy(DataError):
    pass


class EmptyPartition(DataError):
    pass


# cross validation
class BadK(DataError):
    pass


class FoldError(MlblockError):
    def __init__(self, fold, cause):
        self.fold = fold
        super().__init__(f"fold {fold}: {cause}")


# blocking / assignment / selection
class BadBlockCount(DataError):
    pass


class BudgetTooSmall(DataError):
    pass


class ModeDataMismatch(DataError):
    pass


class OddN(DataError):
    pass


class MissingPre3(DataError):
    pass


class TooSmallForSplit(DataError):
    pass


# estimation
class RankDeficient(DataError):
    pass


class DegenerateArms(DataError):
    pass


class DofExhausted(DataError):
    pass


class BadSpec(DataError):
    pass
