"""Ground-truth matchers and the Monte-Carlo rate estimator.

Deliberately naive O(n*d) scans built only on the core predicates; these stay
independent of every protocol and compiler code path so they can judge them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bits import BitVector, Dataset, TernaryPattern, match_pm, subset_of
from .engine import RandomTape, Stream


def brute_force_pm(dataset: Dataset, y: TernaryPattern) -> set[int]:
    if y.dim != dataset.dim:
        raise ValueError("query dimension must match the dataset")
    return {i for i, x in enumerate(dataset.points) if match_pm(x, y)}


def brute_force_sq(dataset: Dataset, y: BitVector) -> set[int]:
    if y.dim != dataset.dim:
        raise ValueError("query dimension must match the dataset")
    return {i for i, x in enumerate(dataset.points) if subset_of(x, y)}


@dataclass(frozen=True)
class RateEstimate:
    mean: float
    stderr: float
    trials: int

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        return abs(self.mean - target) <= sigmas * self.stderr

    def at_most(self, bound: float, sigmas: float = 3.0) -> bool:
        return self.mean <= bound + sigmas * self.stderr


def accept_rate(run, trials: int, seed: int) -> RateEstimate:
    """Unbiased accept-rate estimate for a 0/1 closure run(trial_rng)."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = RandomTape(seed, Stream.PUB)
    hits = 0
    for _ in range(trials):
        hits += 1 if run(rng) else 0
    p = hits / trials
    return RateEstimate(p, math.sqrt(p * (1.0 - p) / trials), trials)
