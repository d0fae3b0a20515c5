from datetime import datetime, timedelta, timezone


class SystemClock:
    """Wall clock in UTC."""

    def now(self):
        return datetime.now(timezone.utc)

    def today(self):
        return self.now().date()


class ManualClock:
    """A clock that only moves when told to. Used by tests and `--clock`."""

    def __init__(self, start=None):
        self._now = start or datetime(2026, 1, 1, tzinfo=timezone.utc)
        if self._now.tzinfo is None:
            self._now = self._now.replace(tzinfo=timezone.utc)

    def now(self):
        return self._now

    def today(self):
        return self._now.date()

    def advance(self, seconds=0, days=0):
        self._now = self._now + timedelta(seconds=seconds, days=days)
        return self._now
