"""Exchange-rate feed: the value of 1 ZEC in issuing-chain currency i.

A scripted single source. Rates are exact rationals so collateral
comparisons reduce to integer cross-multiplication; manipulation scenarios
(spikes, crashes) are just scripted rate changes.
"""

from __future__ import annotations

import bisect
from fractions import Fraction


class FeedUnavailable(LookupError):
    """No rate has been set at or before the queried tick."""


class OracleError(ValueError):
    pass


class RateFeed:
    def __init__(self):
        self._ticks: list[int] = []
        self._rates: list[Fraction] = []

    def set_rate(self, tick: int, rate: Fraction) -> None:
        rate = Fraction(rate)
        if rate <= 0:
            raise OracleError(f"rate must be positive, got {rate}")
        pos = bisect.bisect_left(self._ticks, tick)
        if pos < len(self._ticks) and self._ticks[pos] == tick:
            self._rates[pos] = rate
        else:
            self._ticks.insert(pos, tick)
            self._rates.insert(pos, rate)

    def get_rate(self, tick: int) -> Fraction:
        """Latest rate set at or before the tick."""
        pos = bisect.bisect_right(self._ticks, tick)
        if pos == 0:
            raise FeedUnavailable(f"no rate at or before tick {tick}")
        return self._rates[pos - 1]
