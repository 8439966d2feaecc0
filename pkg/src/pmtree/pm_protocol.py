"""Sparse partial-match protocol.

Reduces wildcard matching to subset queries: the public channel samples points
until one nearly matches the query, the point side re-centers by XOR against
that sample, and two containment checks (one each way) decide the match. When
no near-match shows up, random halving sets shrink the wildcard budget and the
protocol recurses. All error is on the accept side.
"""

from __future__ import annotations

import math
from dataclasses import replace

from .base_protocol import SQ, PM, BaseAdvice, base_exec, special_advice, sq_advice_width
from .bits import BitVector, CoordDomain, TernaryPattern
from .dist import EmpiricalDistribution
from .engine import (
    BIG,
    CONTINUE,
    OUT0,
    Message,
    Player,
    ProtocolParams,
    RandomTape,
    Stream,
    Tapes,
    Transcript,
    index_width,
    status_message,
)
from .sq_protocol import AdviceFeed, sq_exec


def pm_round_samples(params: ProtocolParams) -> int:
    """Per-round sample count for the near-match search (cap applies)."""
    if params.t_override is not None:
        return params.t_override
    t = math.ceil((100.0 / params.eps) * math.log2(10.0 / params.eps))
    if params.t_cap is not None:
        t = min(t, params.t_cap)
    return max(t, 1)


def pm_gap(params: ProtocolParams) -> float:
    """Tolerated non-star disagreements for a usable sample."""
    if params.h_override is not None:
        return params.h_override
    return math.log2(10.0 / params.eps)


def pm_halving_count(delta: float) -> int:
    return max(1, math.ceil(math.log2(10.0 / delta)))


def recursion_depth_cap(params: ProtocolParams) -> int:
    ratio = params.w / math.log2(1.0 / params.eps)
    if ratio <= 1.0:
        return 0
    return math.ceil(2.0 * math.log2(ratio))


def unmatched_count(sample: BitVector, y: TernaryPattern) -> int:
    """Non-star coordinates where the sample disagrees with the query."""
    return ((sample.value ^ y.one_bits) & ~y.stars & ((1 << y.dim) - 1)).bit_count()


def run_pm(
    params: ProtocolParams,
    dist: EmpiricalDistribution,
    x: BitVector,
    y: TernaryPattern,
    advice: tuple[BaseAdvice, ...] | None,
    tapes: Tapes,
    transcript: Transcript | None = None,
) -> Transcript:
    """Decide whether x matches y. advice=None computes the honest prover messages."""
    tr = transcript if transcript is not None else Transcript()
    feed = AdviceFeed(advice)
    out = pm_exec(params, dist, x, y, tapes, tr, feed)
    return tr.finalize(out)


def pm_special_advice(
    dist: EmpiricalDistribution,
    x: BitVector,
    y: TernaryPattern,
    pub_tape: RandomTape,
    params: ProtocolParams,
) -> tuple[BaseAdvice, ...]:
    """Honest prover segments in invocation order (containment first, then the
    reverse parity check), found by replaying the public part of the run."""
    tapes = Tapes(pub_tape.clone(), RandomTape(pub_tape.seed, Stream.PRI))
    feed = AdviceFeed(None)
    pm_exec(params, dist, x, y, tapes, Transcript(), feed)
    return tuple(feed.collected)


def pm_exec(
    params: ProtocolParams,
    dist: EmpiricalDistribution,
    x: BitVector,
    y: TernaryPattern,
    tapes: Tapes,
    tr: Transcript,
    feed: AdviceFeed,
    depth: int = 0,
    depth_cap: int | None = None,
) -> int:
    d = dist.dim
    if x.dim != d or y.dim != d:
        raise ValueError("inputs must live on the distribution's domain")
    if params.d != d:
        params = params.with_dim(d)
    w = params.w
    if y.star_count() > w:
        raise ValueError(f"query has {y.star_count()} stars, budget is {w}")
    if depth_cap is None:
        depth_cap = recursion_depth_cap(params)
    assert depth <= max(depth_cap, 1), "recursion exceeded its depth bound"

    if params.is_base_case():
        seg = feed.next(
            lambda: special_advice(PM, x, y, w), PM, y.star_count()
        )
        return base_exec(PM, x, y, w, w, params.delta, seg, tapes, tr)

    t = pm_round_samples(params)
    h = pm_gap(params)
    batch = []
    packed = 0
    for i in range(t):
        xi = dist.sample(tapes.pub)
        batch.append(xi)
        packed |= xi.value << (i * d)
    tr.append(Message(Player.CAROL_PUB, packed, t * d, "near-match-batch"))

    istar = next((i for i, xi in enumerate(batch) if unmatched_count(xi, y) <= h), None)

    if istar is None:
        tr.append(status_message(Player.BOB, BIG, "xi-none"))
        n_halving = pm_halving_count(params.delta)
        halves = []
        packed = 0
        for j in range(n_halving):
            s = tapes.pub.draw_vector(d)
            halves.append(s)
            packed |= s.value << (j * d)
        tr.append(Message(Player.CAROL_PUB, packed, n_halving * d, "halving-sets"))
        jstar = next(
            (
                j
                for j, s in enumerate(halves)
                if (y.stars & s.value).bit_count() <= 2.0 * w / 3.0
            ),
            None,
        )
        if jstar is None:
            tr.append(status_message(Player.BOB, BIG, "halving-none"))
            return 1
        tr.append(status_message(Player.BOB, CONTINUE, "halving-found"))
        tr.append(Message(Player.BOB, jstar, index_width(n_halving), "half-index"))
        keep = halves[jstar]
        if keep.popcount() == 0:
            return 1
        dom = CoordDomain.full(d).select(keep)
        sub = replace(
            params,
            d=dom.size,
            w=max(1.0, 2.0 * w / 3.0),
            eps=params.eps / 2.0,
            delta=params.delta / 10.0,
        )
        return pm_exec(
            sub,
            dist.restrict_relative(keep),
            x.restrict(dom),
            y.restrict(dom),
            tapes,
            tr,
            feed,
            depth + 1,
            depth_cap,
        )

    tr.append(status_message(Player.BOB, CONTINUE, "xi-found"))
    tr.append(Message(Player.BOB, istar, index_width(t), "xi-index"))
    xi = batch[istar]

    x_shift = x ^ xi
    disagree = (y.one_bits ^ xi.value) & ~y.stars & ((1 << d) - 1)
    y_shift = TernaryPattern(d, y.stars, disagree)

    if x_shift.popcount() > w + h:
        tr.append(status_message(Player.ALICE, OUT0, "shift-too-heavy"))
        return 0
    tr.append(status_message(Player.ALICE, CONTINUE, "shift-ok"))

    shifted_dist = dist.xor_shift(xi)
    target = y_shift.star_vector() | y_shift.ones_vector()
    sub_sq = replace(params, w=w + h, eps=params.eps / 10.0, delta=params.delta / 10.0)
    out_contain = sq_exec(sub_sq, shifted_dist, x_shift, target, tapes, tr, feed)

    hits = y_shift.ones_vector()
    seg = feed.next(
        lambda: special_advice(SQ, hits, x_shift, h, public_cap=w + h),
        SQ,
        sq_advice_width(math.floor(w + h), math.floor(h)),
    )
    out_reverse = base_exec(
        SQ,
        hits,
        x_shift,
        h,
        w + h,
        params.delta / 10.0,
        seg,
        tapes,
        tr,
        swap_roles=True,
    )
    return out_contain & out_reverse
