"""Exception hierarchy.

Load and validation problems derive from :class:`ValidationError`; problems
raised while computing a metric derive from :class:`MetricError`.  The CLI maps
the two families onto different exit codes.
"""


class DeidBenchError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(DeidBenchError, ValueError):
    pass


class ParseError(ValidationError):
    pass


class DuplicateFeature(ValidationError):
    pass


class UnknownFeature(ValidationError, KeyError):
    def __str__(self):  # KeyError quotes its message otherwise
        return Exception.__str__(self)


class OutOfDomain(ValidationError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}: value {value!r} is outside the domain of column {column!r}")


class RaggedRow(ValidationError):
    pass


class EmptyFile(ValidationError):
    pass


class EmptySelection(ValidationError):
    pass


class DictionaryMismatch(ValidationError):
    pass


class InvalidRule(ValidationError):
    pass


class MetricError(DeidBenchError):
    pass


class EmptyDataset(MetricError):
    pass


class Undiscretized(MetricError):
    pass


class DegenerateFeature(MetricError):
    pass


class EntropyMismatch(MetricError):
    pass


class FlatCalibration(MetricError):
    pass


class TooManyCells(MetricError):
    pass
