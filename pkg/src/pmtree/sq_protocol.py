"""Sparse subset-query protocol.

Small budgets route straight to the parity-check subroutine. Larger ones loop:
the point side announces its size class, the public channel draws samples
conditioned on a size window, and either a near-subset sample lets everyone
shed its coordinates, or random halving sets shrink the budget and the
protocol recurses at half the error. Output-1 paths only ever overshoot
(false positives); every 0 output is certified by a witness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .base_protocol import (
    SQ,
    BaseAdvice,
    base_exec,
    rank_subset,
    special_advice,
    sq_advice_width,
    unrank_subset,
)
from .bits import BitVector, CoordDomain
from .dist import EMPTY_SUPPORT, EmpiricalDistribution
from .engine import (
    BIG,
    CONTINUE,
    OUT0,
    SMALL,
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


class ProtocolError(Exception):
    pass


class AdviceFeed:
    """Supplies prover segments to the parity subroutine invocations.

    With fixed segments, each invocation consumes the next one (an exhausted
    feed yields an all-ones payload, which is just another wrong message).
    Without segments the feed computes the honest value and records it.
    """

    def __init__(self, segments: tuple[BaseAdvice, ...] | None = None):
        self.fixed = segments
        self.cursor = 0
        self.collected: list[BaseAdvice] = []

    def next(self, honest, mode: str, width: int) -> BaseAdvice:
        if self.fixed is None:
            seg = honest()
            self.collected.append(seg)
            return seg
        if self.cursor < len(self.fixed):
            seg = self.fixed[self.cursor]
            self.cursor += 1
            return seg
        return BaseAdvice(mode, (1 << width) - 1 if width else 0, width)


def halving_count(ell: float, delta_prime: float) -> int:
    return max(1, math.ceil(math.log2(10.0 * ell / delta_prime)))


def run_sq(
    params: ProtocolParams,
    dist: EmpiricalDistribution,
    x: BitVector,
    y: BitVector,
    advice: tuple[BaseAdvice, ...] | None,
    tapes: Tapes,
    transcript: Transcript | None = None,
) -> Transcript:
    """Decide x subseteq y. advice=None computes the honest prover messages."""
    tr = transcript if transcript is not None else Transcript()
    feed = AdviceFeed(advice)
    out = sq_exec(params, dist, x, y, tapes, tr, feed)
    return tr.finalize(out)


def sq_special_advice(
    dist: EmpiricalDistribution,
    x: BitVector,
    y: BitVector,
    pub_tape: RandomTape,
    params: ProtocolParams,
) -> tuple[BaseAdvice, ...]:
    """Replay the public part of the run and return the honest prover segments.

    Deterministic in (dist, x, y, pub tape state); empty tuple when the run
    terminates without a parity subroutine.
    """
    tapes = Tapes(pub_tape.clone(), RandomTape(pub_tape.seed, Stream.PRI))
    feed = AdviceFeed(None)
    sq_exec(params, dist, x, y, tapes, Transcript(), feed)
    return tuple(feed.collected)


def sq_exec(
    params: ProtocolParams,
    dist: EmpiricalDistribution,
    x: BitVector,
    y: BitVector,
    tapes: Tapes,
    tr: Transcript,
    feed: AdviceFeed,
) -> int:
    d = dist.dim
    if x.dim != d or y.dim != d:
        raise ValueError("inputs must live on the distribution's domain")
    if params.d != d:
        params = params.with_dim(d)
    w = params.w
    if y.popcount() > w:
        raise ValueError(f"query has {y.popcount()} ones, budget is {w}")

    if params.is_base_case():
        if x.popcount() > w:
            tr.append(status_message(Player.ALICE, OUT0, "size-over-budget"))
            return 0
        tr.append(status_message(Player.ALICE, SMALL, "size-ok"))
        seg = feed.next(
            lambda: special_advice(SQ, x, y, w),
            SQ,
            sq_advice_width(y.popcount(), math.floor(w)),
        )
        return base_exec(SQ, x, y, w, w, params.delta_prime, seg, tapes, tr)

    ell = params.ell
    t = params.t
    h = params.h
    w_cur = float(w)
    x_cur, y_cur = x, y
    dist_cur = dist

    for _ in range(params.max_iters):
        if __debug__ and params.debug_checks:
            assert x_cur.subset_of(y_cur) == x.subset_of(y)

        if x_cur.popcount() > w_cur:
            tr.append(status_message(Player.ALICE, OUT0, "size-over-budget"))
            return 0
        if x_cur.popcount() <= w / ell:
            tr.append(status_message(Player.ALICE, SMALL, "size-small"))
            z = w / ell
            x_small, y_small = x_cur, y_cur
            seg = feed.next(
                lambda: special_advice(SQ, x_small, y_small, z),
                SQ,
                sq_advice_width(y_cur.popcount(), math.floor(z)),
            )
            return base_exec(SQ, x_cur, y_cur, z, w, params.delta_prime, seg, tapes, tr)

        tr.append(status_message(Player.ALICE, BIG, "size-in-window"))
        batch = draw_conditioned_batch(dist_cur, w / ell, w_cur, t, tapes.pub, tr)
        if batch is None:
            return 0

        istar = next(
            (i for i, xi in enumerate(batch) if xi.diff(y_cur).popcount() <= h), None
        )
        if istar is not None:
            tr.append(status_message(Player.BOB, CONTINUE, "xi-found"))
            xi = batch[istar]
            overflow = xi.diff(y_cur)
            iw = index_width(t)
            rw = sq_advice_width(xi.popcount(), math.floor(h))
            rank = rank_subset(xi, overflow, math.floor(h))
            tr.append(
                Message(Player.BOB, istar | (rank << iw), iw + rw, "xi-index-rank")
            )
            # The point side decodes the overflow set from the wire, not from y.
            overflow = unrank_subset(xi, rank, math.floor(h))
            if x_cur.intersects(overflow):
                tr.append(status_message(Player.ALICE, OUT0, "overlap-witness"))
                return 0
            tr.append(status_message(Player.ALICE, CONTINUE, "no-overlap"))
            shed = xi.popcount() - overflow.popcount()
            if params.base_factor >= 100.0 and params.t_cap is None:
                assert shed >= 0.9 * w / ell - 1e-9
            keep = xi.complement()
            x_cur = restrict_rel(x_cur, keep)
            y_cur = restrict_rel(y_cur, keep)
            dist_cur = dist_cur.restrict_relative(keep)
            w_cur -= shed
            continue

        tr.append(status_message(Player.BOB, BIG, "xi-none"))
        n_halving = halving_count(ell, params.delta_prime)
        dim_cur = dist_cur.dim
        halves = []
        packed = 0
        for j in range(n_halving):
            s = tapes.pub.draw_vector(dim_cur)
            halves.append(s)
            packed |= s.value << (j * dim_cur)
        tr.append(Message(Player.CAROL_PUB, packed, n_halving * dim_cur, "halving-sets"))
        jstar = next(
            (j for j, s in enumerate(halves) if (y_cur & s).popcount() <= 2.0 * w_cur / 3.0),
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
        x_cur = restrict_rel(x_cur, keep)
        y_cur = restrict_rel(y_cur, keep)
        dist_cur = dist_cur.restrict_relative(keep)
        sub = replace(
            params,
            d=dist_cur.dim,
            w=max(1.0, 2.0 * w_cur / 3.0),
            eps=params.eps / 2.0,
            delta=params.delta_prime,
        )
        return sq_exec(sub, dist_cur, x_cur, y_cur, tapes, tr, feed)

    raise ProtocolError("iteration budget exhausted; parameters violate the shrink guarantee")


def draw_conditioned_batch(
    dist: EmpiricalDistribution,
    lo: float,
    hi: float,
    t: int,
    pub: RandomTape,
    tr: Transcript,
) -> list[BitVector] | None:
    """Sample t size-conditioned sets onto the public channel.

    Returns None after logging a zero-bit marker when nothing qualifies; the
    run then outputs 0 (no point of the distribution can sit in the window).
    """
    dim = dist.dim
    first = dist.sample_size_conditioned(lo, hi, pub)
    if first is EMPTY_SUPPORT:
        tr.append(Message(Player.CAROL_PUB, 0, 0, "no-sample"))
        return None
    batch = [first]
    for _ in range(t - 1):
        batch.append(dist.sample_size_conditioned(lo, hi, pub))
    packed = 0
    for i, xi in enumerate(batch):
        packed |= xi.value << (i * dim)
    tr.append(Message(Player.CAROL_PUB, packed, t * dim, "cond-batch"))
    return batch


def restrict_rel(v: BitVector, keep: BitVector) -> BitVector:
    dom = CoordDomain.full(v.dim).select(keep)
    return v.restrict(dom)


@dataclass
class SqState:
    """Loop state snapshot: domain, remaining budget, distribution, iteration."""

    domain: CoordDomain
    budget: float
    dist: EmpiricalDistribution
    iteration: int
