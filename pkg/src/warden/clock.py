"""Injectable monotonic clock so audit timing is testable."""

import time


class SystemClock:
    def now(self) -> float:
        return time.monotonic()


class FakeClock:
    """Manually advanced clock for deterministic replay and tests."""

    def __init__(self, start: float = 0.0):
        self._t = float(start)

    def now(self) -> float:
        return self._t

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("clock cannot go backwards")
        self._t += seconds
