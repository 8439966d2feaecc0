"""Two-party set-disjointness under a product distribution, prover-free.

The containment view of the iterative protocol, run between two ordinary
players with the randomness folded into a shared seed: rounds shed sampled
sets that sit inside the complement of Bob's set, and once Alice's residual
is small she sends it outright for an exact check. Declaring "intersecting"
can be wrong (that is the type II error the seed is chosen to keep small);
declaring "disjoint" never is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

from .bits import BitVector, CoordDomain, Dataset
from .dist import EMPTY_SUPPORT, EmpiricalDistribution
from .engine import RandomTape, Stream, index_width
from .oracles import RateEstimate


@dataclass(frozen=True)
class StdParams:
    d: int
    ell: int
    eps: float

    def __post_init__(self):
        if self.d < 1 or self.ell < 1:
            raise ValueError("need d >= 1 and ell >= 1")
        if not 0 < self.eps < 0.5:
            raise ValueError("need 0 < eps < 0.5")

    @property
    def theta(self) -> int:
        """Minimum size of shed samples; also the explicit-send threshold."""
        return math.ceil(self.d / self.ell)

    @property
    def round_samples(self) -> int:
        return math.ceil(8.0 * self.ell / self.eps)

    def alice_budget(self) -> float:
        return self.ell + math.ceil(self.d / self.ell) * math.log2(3 * math.e * self.ell)

    def bob_budget(self) -> float:
        return 2.0 * self.ell * math.log2(16.0 * self.ell / self.eps)


@dataclass(frozen=True)
class StdRunResult:
    output: int  # 1 = declared disjoint, 0 = declared intersecting
    a_bits: int
    b_bits: int
    rounds: int


def run_std(
    lam: EmpiricalDistribution,
    rho: EmpiricalDistribution,
    x: BitVector,
    y: BitVector,
    seed: int,
    params: StdParams,
) -> StdRunResult:
    """One deterministic-given-seed run deciding whether x and y intersect."""
    d = params.d
    if x.dim != d or y.dim != d or lam.dim != d:
        raise ValueError("inputs must have the protocol dimension")
    tape = RandomTape(seed, Stream.PUB)
    theta = params.theta
    t = params.round_samples

    x_cur = x
    ybar_cur = y.complement()
    dist_cur = lam
    a_bits = 0
    b_bits = 0

    for rnd in range(params.ell):
        a_bits += 1  # size-class announcement
        if x_cur.popcount() <= theta:
            k = x_cur.popcount()
            size_field = index_width(theta + 1)
            rank_field = index_width(comb(dist_cur.dim, k))
            a_bits += size_field + rank_field
            b_bits += 1  # verdict
            ok = x_cur.subset_of(ybar_cur)
            return StdRunResult(1 if ok else 0, a_bits, b_bits, rnd + 1)

        sample = dist_cur.sample_size_conditioned(theta - 0.5, dist_cur.dim, tape)
        if sample is EMPTY_SUPPORT:
            b_bits += 1
            return StdRunResult(0, a_bits, b_bits, rnd + 1)
        batch = [sample]
        for _ in range(t - 1):
            batch.append(dist_cur.sample_size_conditioned(theta - 0.5, dist_cur.dim, tape))

        istar = next((i for i, xi in enumerate(batch) if xi.subset_of(ybar_cur)), None)
        if istar is None:
            b_bits += 1
            return StdRunResult(0, a_bits, b_bits, rnd + 1)
        b_bits += 1 + index_width(t)
        keep = batch[istar].complement()
        dom = CoordDomain.full(keep.dim).select(keep)
        x_cur = x_cur.restrict(dom)
        ybar_cur = ybar_cur.restrict(dom)
        dist_cur = dist_cur.restrict_relative(keep)

    raise AssertionError("residual domain must be exhausted within ell rounds")


@dataclass(frozen=True)
class FixResult:
    seed: int
    heldout: RateEstimate
    estimates: dict[int, float]


def _draw_pair(lam: EmpiricalDistribution, rho: EmpiricalDistribution, tape: RandomTape):
    return lam.sample(tape), rho.sample(tape)


def fix_randomness(
    lam: EmpiricalDistribution,
    rho: EmpiricalDistribution,
    params: StdParams,
    candidate_seeds: list[int],
    trials: int,
    eval_seed: int = 0,
) -> FixResult:
    """Pick the candidate seed with the lowest estimated error, then estimate
    the chosen seed's error again on fresh pairs."""
    if not candidate_seeds:
        raise ValueError("need at least one candidate seed")
    estimates: dict[int, float] = {}
    for cand in candidate_seeds:
        sel_tape = RandomTape(eval_seed ^ (cand * 0x9E3779B97F4A7C15), Stream.PUB)
        wrong = 0
        for _ in range(trials):
            x, y = _draw_pair(lam, rho, sel_tape)
            truth = 1 if not x.intersects(y) else 0
            got = run_std(lam, rho, x, y, cand, params).output
            wrong += 1 if got != truth else 0
        estimates[cand] = wrong / trials
    chosen = min(candidate_seeds, key=lambda s: (estimates[s], s))

    held_tape = RandomTape(eval_seed ^ (chosen * 0x9E3779B97F4A7C15), Stream.PRI)
    wrong = 0
    for _ in range(trials):
        x, y = _draw_pair(lam, rho, held_tape)
        truth = 1 if not x.intersects(y) else 0
        got = run_std(lam, rho, x, y, chosen, params).output
        wrong += 1 if got != truth else 0
    p = wrong / trials
    heldout = RateEstimate(p, math.sqrt(p * (1 - p) / trials), trials)
    return FixResult(chosen, heldout, estimates)


def random_fixed_size_set(dim: int, k: int, tape: RandomTape) -> BitVector:
    """Uniform subset of [dim] with exactly k elements."""
    if not 0 <= k <= dim:
        raise ValueError("need 0 <= k <= dim")
    chosen: list[int] = []
    pool = list(range(dim))
    for i in range(k):
        j = i + tape.draw_below(dim - i)
        pool[i], pool[j] = pool[j], pool[i]
        chosen.append(pool[i])
    return BitVector.from_ones(dim, chosen)


def uniform_size_dataset(dim: int, k: int, n: int, seed: int) -> Dataset:
    """Empirical stand-in for the uniform size-k distribution: n i.i.d. draws."""
    tape = RandomTape(seed, Stream.PUB)
    return Dataset(dim, tuple(random_fixed_size_set(dim, k, tape) for _ in range(n)))


def exact_disjoint_probability(d: int, k: int, l: int) -> float:
    """Closed form for uniform fixed-size sets: C(d-k, l) / C(d, l)."""
    if k + l > d:
        return 0.0
    return comb(d - k, l) / comb(d, l)


def disjoint_probability_check(
    d: int, k: int, l: int, eps: float, trials: int = 20000, seed: int = 7
) -> bool:
    """Generator sanity oracle: empirical disjoint rate of uniform size-k vs
    size-l sets stays above eps minus three standard errors.

    Hypothesis bound taken non-strictly; the underlying estimate still holds
    with equality.
    """
    if k == 0 or l == 0:
        return True
    if not (k <= l < d / 3.0):
        raise ValueError("need k <= l < d/3")
    if k * l > d * math.log(1.0 / eps) / 3.0:
        raise ValueError("need k*l <= d*ln(1/eps)/3")
    tape = RandomTape(seed, Stream.PUB)
    hits = 0
    for _ in range(trials):
        x = random_fixed_size_set(d, k, tape)
        yv = random_fixed_size_set(d, l, tape)
        hits += 0 if x.intersects(yv) else 1
    p = hits / trials
    sigma = math.sqrt(max(p * (1 - p), 1e-12) / trials)
    return p >= eps - 3.0 * sigma
