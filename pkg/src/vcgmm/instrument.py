"""Distance-evaluation counters and per-phase wall clocks.

Every algorithm in the package charges its squared-distance evaluations to a
:class:`DistanceCounter`. Counts are kept per phase so that algorithm cost and
evaluation cost never mix.
"""

from __future__ import annotations

import time
from collections import Counter
from contextlib import contextmanager
from typing import Iterator

PHASES = ("coreset", "seeding", "estep", "mstep", "evaluation")

# Channels summed into the total reported for an algorithm. The M-step
# residuals and the final quality evaluation are tracked but not part of it.
ALGORITHM_PHASES = ("coreset", "seeding", "estep")


class DistanceCounter:
    """Per-phase tally of squared-distance evaluations.

    The active phase is switched with :meth:`phase`; :meth:`charge` adds to
    the active phase unless one is named explicitly.
    """

    def __init__(self, phase: str = "estep"):
        self.counts: Counter[str] = Counter({p: 0 for p in PHASES})
        self._active = phase

    @property
    def active(self) -> str:
        return self._active

    @contextmanager
    def phase(self, name: str) -> Iterator["DistanceCounter"]:
        previous, self._active = self._active, name
        try:
            yield self
        finally:
            self._active = previous

    def charge(self, n: int, phase: str | None = None) -> None:
        if n < 0:
            raise ValueError("cannot charge a negative number of evaluations")
        self.counts[phase or self._active] += int(n)

    def __getitem__(self, phase: str) -> int:
        return self.counts[phase]

    def total(self, phases=ALGORITHM_PHASES) -> int:
        return sum(self.counts[p] for p in phases)

    def merge(self, other: "DistanceCounter") -> "DistanceCounter":
        """Add another counter's tallies into this one (order independent)."""
        self.counts.update(other.counts)
        return self

    def as_dict(self) -> dict[str, int]:
        return {k: int(v) for k, v in self.counts.items()}


class PhaseTimer:
    """Accumulates monotonic wall time per named phase."""

    def __init__(self):
        self.times: dict[str, float] = {}

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.times[name] = self.times.get(name, 0.0) + time.perf_counter() - start

    def total(self, exclude=("evaluation",)) -> float:
        return sum(v for k, v in self.times.items() if k not in exclude)

    def fractions(self, exclude=("evaluation",)) -> dict[str, float]:
        tot = self.total(exclude)
        if tot <= 0:
            return {k: 0.0 for k in self.times if k not in exclude}
        return {k: v / tot for k, v in self.times.items() if k not in exclude}
