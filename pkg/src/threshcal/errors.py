"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
1 for usage problems, 2 for data problems and 3 for numerical failures.
"""


class ThreshcalError(Exception):
    exit_code = 3


class UsageError(ThreshcalError):
    exit_code = 1


class DataError(ThreshcalError):
    exit_code = 2


class NumericError(ThreshcalError):
    exit_code = 3


# --- configuration -------------------------------------------------------

class ConfigInvalid(UsageError):
    pass


class OutOfRange(UsageError, ValueError):
    pass


# --- data ----------------------------------------------------------------

class DatasetNotFound(DataError, FileNotFoundError):
    pass


class MissingField(DataError):
    def __init__(self, name):
        super().__init__(f"missing field: {name!r}")
        self.name = name


class LabelUnmapped(DataError):
    def __init__(self, row, value):
        super().__init__(f"row {row}: label {value!r} matches neither token")
        self.row = row
        self.value = value


class EmptyAfterCleaning(DataError):
    pass


class TooFewPerClass(DataError):
    def __init__(self, label, count, k):
        super().__init__(f"class {label} has {count} records, need at least {k}")
        self.label = label
        self.count = count
        self.k = k


class DegenerateSplit(DataError):
    pass


class TooFewSamples(DataError):
    pass


class SingleClass(DataError):
    pass


class NoPositives(DataError):
    pass


class EmptyCalibration(DataError):
    pass


class EmptyTest(DataError):
    pass


# --- numerics ------------------------------------------------------------

class ZeroVariance(NumericError):
    pass


class NoBimodalStructure(NumericError):
    pass


class ZeroEvidence(NumericError):
    pass


class UnreachableConfidence(NumericError):
    pass


class Separation(NumericError):
    pass


class NotConverged(NumericError):
    pass


class UnreachableProbability(NumericError):
    pass


class PassNeverIncluded(NumericError):
    pass
