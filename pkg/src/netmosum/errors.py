"""Exception types shared across the package."""


class NetmosumError(Exception):
    """Base class for all package-specific errors."""


class TooShort(NetmosumError, ValueError):
    """Training sample has fewer than two observations."""


class DegenerateTraining(NetmosumError, ValueError):
    """Training sample is (numerically) constant, so no scale can be estimated."""


class NonPositiveLRV(NetmosumError, ValueError):
    """Kernel long-run variance estimate came out non-positive."""

    def __init__(self, value: float):
        super().__init__(f"long-run variance estimate is non-positive ({value!r})")
        self.value = value


class WindowNotFull(NetmosumError, ValueError):
    """Moving window does not contain enough observations yet."""


class SourceExhausted(NetmosumError, ValueError):
    """Row source ended before the training period was complete."""


class DataFormatError(NetmosumError, ValueError):
    """A data row could not be parsed; carries the offending row index."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class InvalidScenario(NetmosumError, ValueError):
    """Scenario parameters are inconsistent with the monitoring setup."""


class InsufficientReps(NetmosumError, ValueError):
    """Too few replications for a reliable tail quantile."""


class SearchRangeEmpty(NetmosumError, ValueError):
    """Window-size search range contains no candidates."""
