"""Exception hierarchy.

Everything raised on bad input derives from :class:`DataError` so the CLI can
map it to exit code 1 in one place.
"""


class TempobeatError(Exception):
    """Base class for all package errors."""


class DataError(TempobeatError):
    """Input data violates a precondition."""


class EmptySeries(DataError):
    pass


class DegenerateSeries(DataError):
    pass


class LengthMismatch(DataError):
    pass


class InsufficientSpan(DataError):
    pass


class InsufficientDays(DataError):
    pass


class LagOutOfRange(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class DuplicateStamp(ParseError):
    pass


class NonHourStamp(ParseError):
    pass


class UnknownCategory(ParseError):
    pass


class InvertedSpan(ParseError):
    pass


class UnknownStation(DataError):
    pass


class GapTooLarge(DataError):
    pass


class CoverageGap(DataError):
    pass


class ObservationGap(DataError):
    def __init__(self, missing):
        self.missing = list(missing)
        first = self.missing[0]
        more = f" (+{len(self.missing) - 1} more)" if len(self.missing) > 1 else ""
        super().__init__(f"observation series is missing hour {first}{more}")


class UnknownColumn(DataError):
    pass


class EmptyAfterRestriction(DataError):
    pass


class RankDeficientFixed(DataError):
    pass


class SingularFactorization(DataError):
    pass


class TooLargeForOracle(DataError):
    pass


class GroupUnseen(DataError):
    pass


class MissingKeys(DataError):
    pass


class EmptyInput(DataError):
    pass


class NoEligibleCells(DataError):
    pass


class InvalidConfig(DataError):
    pass


class NotConverged(TempobeatError):
    """Raised by callers that demand convergence; fits themselves only flag it."""
