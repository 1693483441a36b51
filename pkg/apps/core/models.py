import threading
from collections import Counter
from dataclasses import dataclass

from django.utils.translation import gettext_lazy as _

from .exceptions import InvalidParameter


class OperationCounters:
    """Named counters for oracle calls, messages and comparisons.

    Complexity envelopes are asserted against these counts, so every
    layer bumps the counters it owns. Thread safe.
    """

    def __init__(self):
        self._counts = Counter()
        self._lock = threading.Lock()

    def bump(self, name, amount=1):
        with self._lock:
            self._counts[name] += amount

    def get(self, name):
        return self._counts.get(name, 0)

    def snapshot(self, prefix=''):
        with self._lock:
            return {key: value for key, value in sorted(self._counts.items()) if key.startswith(prefix)}

    def reset(self, prefix=''):
        with self._lock:
            for key in [key for key in self._counts if key.startswith(prefix)]:
                del self._counts[key]

    def __getitem__(self, name):
        return self.get(name)


@dataclass
class SimClock:
    """Simulated clock in seconds; never moves backwards"""

    now: float = 0.0

    def advance(self, seconds):
        if seconds < 0:
            raise InvalidParameter(_('Clock cannot advance by a negative amount'), seconds=seconds)
        self.now += seconds
        return self.now

    def set(self, moment):
        """Move the clock forward to ``moment`` if it is later than now"""
        if moment > self.now:
            self.now = moment
        return self.now
