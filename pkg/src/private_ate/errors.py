"""Exception hierarchy shared by every module."""

from __future__ import annotations


class PrivateAteError(Exception):
    """Base class for all errors raised by this package."""


class EmptyDataset(PrivateAteError):
    pass


class OutOfBounds(PrivateAteError):
    def __init__(self, index: int, coordinate: str, value: float):
        self.index = index
        self.coordinate = coordinate
        self.value = value
        super().__init__(f"sample {index}: {coordinate}={value!r} lies outside the domain bounds")


class NonBinaryTreatment(PrivateAteError):
    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"sample {index}: treatment {value!r} is not in {{0, 1}}")


class DegenerateSplit(PrivateAteError):
    pass


class ParseError(PrivateAteError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class SchemaError(PrivateAteError):
    def __init__(self, column: str, message: str = ""):
        self.column = column
        super().__init__(f"{column}: {message}" if message else column)


class SingleArm(PrivateAteError):
    pass


class LinearSolveFailure(PrivateAteError):
    pass


class NonFiniteLoss(PrivateAteError):
    pass


class NonFiniteObjective(PrivateAteError):
    def __init__(self, point):
        self.point = point
        super().__init__(f"objective is not finite at {point!r}")


class InvalidBudget(PrivateAteError, ValueError):
    pass


class DomainError(PrivateAteError, ValueError):
    pass


class ConfigError(PrivateAteError):
    pass
