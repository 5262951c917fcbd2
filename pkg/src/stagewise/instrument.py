"""Process-wide call counters used to audit which modules a run touched."""

from collections import Counter

CALLS: Counter = Counter()


def hit(name: str) -> None:
    CALLS[name] += 1


def reset() -> None:
    CALLS.clear()
