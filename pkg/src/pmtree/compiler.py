"""Compile a protocol over a concrete dataset into a static search tree.

The build simulates the protocol once per dataset point against an enumerated
query side and fixed randomness tapes: point-side messages become nodes keyed
by the realized values, query-side messages fork over their whole (public)
alphabet, channel randomness is drawn once per position and stored, and every
accepting path stores the point indices whose messages are consistent with it.
Branches that no point survives are pruned; they could never contribute a
candidate.

Prover messages whose decoding happens on the query side (star fills, subset
ranks) are kept as a single deferred edge: the advice value never influences
the stored structure, only the query's own reconstruction. At query time the
walker enumerates exactly the advice values whose reconstruction parities hit
a stored child, via an exact reachability solve over GF(2). Advice decoded on
the point side (the swapped wiring) is enumerated explicitly per point, which
keys those nodes by advice value as usual.

Queries walk the tree: point-side nodes descend every child, query-side nodes
descend the one child matching the honestly computed message, stored channel
data is read back, and candidates from visited accepting leaves pass through
the exact match predicate before being reported.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field, replace

from . import base_protocol as bp
from .bits import BitVector, CoordDomain, Dataset, TernaryPattern, match_pm, subset_of
from .dist import EMPTY_SUPPORT, EmpiricalDistribution
from .engine import (
    BIG,
    CONTINUE,
    OUT0,
    SMALL,
    STATUS_WIDTH,
    ProtocolParams,
    RandomTape,
    Stream,
    Tapes,
    index_width,
)
from .pm_protocol import (
    pm_gap,
    pm_halving_count,
    pm_round_samples,
    unmatched_count,
)
from .sq_protocol import halving_count

PM_PROTOCOL = "pm"
SQ_PROTOCOL = "sq"

MAGIC = b"PMTREE01"
FORMAT_VERSION = 1

DEFAULT_NODE_CEILING = 1 << 26

_SUBSET_ENUM_LIMIT = 4096


class TreeError(Exception):
    pass


class TreeSizeError(TreeError):
    """Projected tree size exceeded the configured ceiling."""

    def __init__(self, node_count: int, ceiling: int):
        super().__init__(
            f"aborting build: {node_count} nodes exceeds the ceiling {ceiling}; "
            "shrink t via t_cap, raise delta, or raise node_ceiling"
        )
        self.node_count = node_count
        self.ceiling = ceiling


@dataclass
class AliceNode:
    site: str
    children: dict[tuple[int, int], object]


@dataclass
class BobNode:
    site: str
    children: dict[tuple[int, int], object]


@dataclass
class MerlinDeferred:
    """Advice edge whose value only the query side decodes."""

    mode: str
    z: float
    child: object


@dataclass
class MerlinExplicit:
    """Advice edge decoded against per-point data; children keyed by value."""

    mode: str
    z: float
    cap: float
    children: dict[tuple[int, int], object]


@dataclass
class CarolNode:
    site: str
    dim: int
    vectors: tuple[BitVector, ...]
    private: bool
    child: object


@dataclass
class Leaf:
    candidates: tuple[int, ...]


@dataclass(frozen=True)
class QueryReport:
    matches: frozenset[int]
    leaves_visited: int
    candidates_scanned: int
    candidates_rejected: int
    bits_walked: int


@dataclass
class TreeMeta:
    protocol: str
    seed: int
    params: ProtocolParams
    fingerprint: bytes
    node_count: int
    leaf_count: int
    candidate_total: int
    max_branching: dict[int, int] = field(default_factory=dict)

    def alphabet_product(self) -> int:
        out = 1
        for depth in sorted(self.max_branching):
            out *= max(1, self.max_branching[depth])
        return out


@dataclass
class ProtocolTree:
    root: object
    meta: TreeMeta
    dataset: Dataset

    def fingerprint(self) -> bytes:
        import hashlib

        return hashlib.sha256(serialize(self)).digest()


class _Budget:
    def __init__(self, ceiling: int):
        self.ceiling = ceiling
        self.nodes = 0
        self.leaves = 0
        self.candidates = 0
        self.max_branching: dict[int, int] = {}

    def note(self, depth: int, n_children: int) -> None:
        self.nodes += 1
        if self.nodes > self.ceiling:
            raise TreeSizeError(self.nodes, self.ceiling)
        if n_children > self.max_branching.get(depth, 0):
            self.max_branching[depth] = n_children

    def note_leaf(self, depth: int, n_candidates: int) -> None:
        self.note(depth, 0)
        self.leaves += 1
        self.candidates += n_candidates


@dataclass
class _Ctx:
    dist: EmpiricalDistribution
    tapes: Tapes
    budget: _Budget
    depth: int

    def fork(self, dist=None) -> "_Ctx":
        return _Ctx(
            dist if dist is not None else self.dist,
            self.tapes.clone(),
            self.budget,
            self.depth + 1,
        )


Cohort = list[tuple[int, BitVector]]


def preprocess(
    dataset: Dataset,
    protocol: str,
    params: ProtocolParams,
    seed: int,
    node_ceiling: int = DEFAULT_NODE_CEILING,
) -> ProtocolTree:
    """Materialize the tree for the given protocol over the dataset."""
    if dataset.n == 0:
        raise ValueError("dataset must be nonempty")
    if protocol not in (PM_PROTOCOL, SQ_PROTOCOL):
        raise ValueError(f"unknown protocol {protocol!r}")
    if params.d != dataset.dim:
        params = params.with_dim(dataset.dim)
    dist = EmpiricalDistribution(dataset)
    budget = _Budget(node_ceiling)
    ctx = _Ctx(dist, Tapes.from_seed(seed), budget, 0)
    cohort: Cohort = [(i, p) for i, p in enumerate(dataset.points)]
    if protocol == PM_PROTOCOL:
        root = _build_pm(ctx, params, cohort, _leaf_maker)
    else:
        root = _build_sq(ctx, params, cohort, _leaf_maker)
    meta = TreeMeta(
        protocol=protocol,
        seed=seed,
        params=params,
        fingerprint=dataset.fingerprint(),
        node_count=budget.nodes,
        leaf_count=budget.leaves,
        candidate_total=budget.candidates,
        max_branching=budget.max_branching,
    )
    return ProtocolTree(root, meta, dataset)


def _leaf_maker(ctx: _Ctx, cohort: Cohort):
    if not cohort:
        return None
    ids = tuple(sorted(i for i, _ in cohort))
    ctx.budget.note_leaf(ctx.depth, len(ids))
    return Leaf(ids)


# ---------------------------------------------------------------------------
# Build side
# ---------------------------------------------------------------------------


def _build_base(
    ctx: _Ctx,
    mode: str,
    cohort: Cohort,
    z: float,
    w: float,
    delta: float,
    cont,
    swapped: bool = False,
):
    """Parity-check stage. cohort carries the point-side data (the value each
    point compares, or in swapped wiring the data the advice decodes against).
    """
    if not cohort:
        return None
    if z > w:
        return None  # unconditional reject, nothing to store
    d = cohort[0][1].dim
    t = bp.base_t(delta)
    rs = tuple(ctx.tapes.pri.draw_vector(d) for _ in range(t))

    if not swapped:
        groups: dict[int, Cohort] = {}
        for idx, xval in cohort:
            groups.setdefault(bp.parity_vector(xval, rs), []).append((idx, xval))
        alice_children: dict[tuple[int, int], object] = {}
        for a in sorted(groups):
            leaf_ctx = ctx.fork()
            leaf_ctx.depth += 3  # below merlin, carol, alice, bob
            leaf = cont(leaf_ctx, groups[a])
            if leaf is None:
                continue
            bob = BobNode("base-recon-parities", {(t, a): leaf})
            ctx.budget.note(ctx.depth + 3, 1)
            alice_children[(t, a)] = bob
        if not alice_children:
            return None
        alice = AliceNode("base-point-parities", alice_children)
        ctx.budget.note(ctx.depth + 2, len(alice_children))
        carol = CarolNode("base-parity-vecs", d, rs, True, alice)
        ctx.budget.note(ctx.depth + 1, 1)
        node = MerlinDeferred(mode, z, carol)
        ctx.budget.note(ctx.depth, 1)
        return node

    # Swapped wiring: enumerate every advice value some point could make true,
    # i.e. the ranks of all small subsets of each point's decode base.
    zmax = math.floor(z)
    cap = math.floor(w)
    width = bp.sq_advice_width(cap, zmax)
    universe: set[int] = set()
    for _, recon_base in cohort:
        count = bp.subset_count(recon_base.popcount(), zmax)
        if count > _SUBSET_ENUM_LIMIT:
            raise TreeSizeError(ctx.budget.nodes + count, ctx.budget.ceiling)
        universe.update(range(count))
    merlin_children: dict[tuple[int, int], object] = {}
    for m in sorted(universe):
        groups = {}
        for idx, recon_base in cohort:
            try:
                recon = bp.unrank_subset(recon_base, m, zmax)
            except bp.DecodeError:
                recon = bp.decode_failed_sentinel(d)
            groups.setdefault(bp.parity_vector(recon, rs), []).append((idx, recon_base))
        bob_children: dict[tuple[int, int], object] = {}
        for b in sorted(groups):
            leaf_ctx = ctx.fork()
            leaf_ctx.depth += 3
            leaf = cont(leaf_ctx, groups[b])
            if leaf is None:
                continue
            alice = AliceNode("base-recon-parities", {(t, b): leaf})
            ctx.budget.note(ctx.depth + 3, 1)
            bob_children[(t, b)] = alice
        if not bob_children:
            continue
        bob = BobNode("base-point-parities", bob_children)
        ctx.budget.note(ctx.depth + 2, len(bob_children))
        carol = CarolNode("base-parity-vecs", d, rs, True, bob)
        ctx.budget.note(ctx.depth + 1, 1)
        merlin_children[(width, m)] = carol
    if not merlin_children:
        return None
    node = MerlinExplicit(bp.SQ, z, w, merlin_children)
    ctx.budget.note(ctx.depth, len(merlin_children))
    return node


def _build_sq(ctx: _Ctx, params: ProtocolParams, cohort: Cohort, cont):
    if not cohort:
        return None
    d = ctx.dist.dim
    if params.d != d:
        params = params.with_dim(d)
    w = params.w

    if params.is_base_case():
        small = [(i, x) for i, x in cohort if x.popcount() <= w]
        sub = _build_base(ctx.fork(), bp.SQ, small, w, w, params.delta_prime, cont)
        if sub is None:
            return None
        node = AliceNode("sq-status", {(STATUS_WIDTH, SMALL): sub})
        ctx.budget.note(ctx.depth, 1)
        return node

    return _build_sq_iter(ctx, params, cohort, float(w), 0, cont)


def _build_sq_iter(
    ctx: _Ctx,
    params: ProtocolParams,
    cohort: Cohort,
    w_cur: float,
    iteration: int,
    cont,
):
    if not cohort:
        return None
    if iteration >= params.max_iters:
        return None  # unreachable with faithful parameters
    w = params.w
    ell = params.ell
    t = params.t
    h = params.h

    small = [(i, x) for i, x in cohort if x.popcount() <= w / ell]
    window = [
        (i, x) for i, x in cohort if w / ell < x.popcount() <= w_cur
    ]

    children: dict[tuple[int, int], object] = {}

    if small:
        sub = _build_base(
            ctx.fork(), bp.SQ, small, w / ell, w, params.delta_prime, cont
        )
        if sub is not None:
            children[(STATUS_WIDTH, SMALL)] = sub

    if window:
        big_ctx = ctx.fork()
        batch = _draw_batch_conditioned(big_ctx, w / ell, w_cur, t)
        if batch is not None:
            carol_child = _build_sq_after_batch(
                big_ctx, params, window, w_cur, iteration, batch, cont
            )
            if carol_child is not None:
                carol = CarolNode(
                    "sq-cond-batch", big_ctx.dist.dim, tuple(batch), False, carol_child
                )
                ctx.budget.note(ctx.depth + 1, 1)
                children[(STATUS_WIDTH, BIG)] = carol

    if not children:
        return None
    node = AliceNode("sq-status", children)
    ctx.budget.note(ctx.depth, len(children))
    return node


def _draw_batch_conditioned(ctx: _Ctx, lo: float, hi: float, t: int):
    first = ctx.dist.sample_size_conditioned(lo, hi, ctx.tapes.pub)
    if first is EMPTY_SUPPORT:
        return None
    batch = [first]
    for _ in range(t - 1):
        batch.append(ctx.dist.sample_size_conditioned(lo, hi, ctx.tapes.pub))
    return batch


def _build_sq_after_batch(
    ctx: _Ctx,
    params: ProtocolParams,
    cohort: Cohort,
    w_cur: float,
    iteration: int,
    batch: list[BitVector],
    cont,
):
    t = params.t
    h = params.h
    w = params.w
    ell = params.ell
    iw = index_width(t)

    tag_children: dict[tuple[int, int], object] = {}

    # Query found a near-subset sample: fork over every (index, overflow rank).
    pair_children: dict[tuple[int, int], object] = {}
    for istar, xi in enumerate(batch):
        rw = bp.sq_advice_width(xi.popcount(), math.floor(h))
        count = bp.subset_count(xi.popcount(), math.floor(h))
        for rank in range(count):
            overflow = bp.unrank_subset(xi, rank, math.floor(h))
            survivors = [(i, x) for i, x in cohort if not x.intersects(overflow)]
            if not survivors:
                continue
            shed = xi.popcount() - overflow.popcount()
            keep = xi.complement()
            dom = CoordDomain.full(keep.dim).select(keep)
            sub_ctx = ctx.fork(ctx.dist.restrict_relative(keep))
            sub_ctx.depth += 3
            shrunk = [(i, x.restrict(dom)) for i, x in survivors]
            sub = _build_sq_iter(
                sub_ctx, params, shrunk, w_cur - shed, iteration + 1, cont
            )
            if sub is None:
                continue
            alice = AliceNode("sq-overlap-tag", {(STATUS_WIDTH, CONTINUE): sub})
            ctx.budget.note(ctx.depth + 3, 1)
            pair_children[(iw + rw, istar | (rank << iw))] = alice
    if pair_children:
        pairs = BobNode("sq-xi-index-rank", pair_children)
        ctx.budget.note(ctx.depth + 2, len(pair_children))
        tag_children[(STATUS_WIDTH, CONTINUE)] = pairs

    # No near-subset sample: halving sets, then accept or recurse.
    none_ctx = ctx.fork()
    none_ctx.depth += 1
    n_halving = halving_count(ell, params.delta_prime)
    dim = none_ctx.dist.dim
    halves = tuple(none_ctx.tapes.pub.draw_vector(dim) for _ in range(n_halving))
    halving_children: dict[tuple[int, int], object] = {}
    accept_ctx = none_ctx.fork()
    accept_ctx.depth += 1
    accept = cont(accept_ctx, list(cohort))
    if accept is not None:
        halving_children[(STATUS_WIDTH, BIG)] = accept
    jw = index_width(n_halving)
    j_children: dict[tuple[int, int], object] = {}
    for j, keep in enumerate(halves):
        if keep.popcount() == 0:
            flat_ctx = none_ctx.fork()
            flat_ctx.depth += 2
            sub = cont(flat_ctx, list(cohort))
        else:
            dom = CoordDomain.full(dim).select(keep)
            sub_ctx = none_ctx.fork(none_ctx.dist.restrict_relative(keep))
            sub_ctx.depth += 2
            shrunk = [(i, x.restrict(dom)) for i, x in cohort]
            sub_params = replace(
                params,
                d=dom.size,
                w=max(1.0, 2.0 * w_cur / 3.0),
                eps=params.eps / 2.0,
                delta=params.delta_prime,
            )
            sub = _build_sq(sub_ctx, sub_params, shrunk, cont)
        if sub is not None:
            j_children[(jw, j)] = sub
    if j_children:
        jnode = BobNode("sq-half-index", j_children)
        none_ctx.budget.note(none_ctx.depth + 2, len(j_children))
        halving_children[(STATUS_WIDTH, CONTINUE)] = jnode
    if halving_children:
        htag = BobNode("sq-halving-tag", halving_children)
        none_ctx.budget.note(none_ctx.depth + 1, len(halving_children))
        carol = CarolNode("sq-halving-sets", dim, halves, False, htag)
        none_ctx.budget.note(none_ctx.depth, 1)
        tag_children[(STATUS_WIDTH, BIG)] = carol

    if not tag_children:
        return None
    node = BobNode("sq-xi-tag", tag_children)
    ctx.budget.note(ctx.depth + 1, len(tag_children))
    return node


def _build_pm(ctx: _Ctx, params: ProtocolParams, cohort: Cohort, cont):
    if not cohort:
        return None
    d = ctx.dist.dim
    if params.d != d:
        params = params.with_dim(d)
    w = params.w

    if params.is_base_case():
        return _build_base(ctx, bp.PM, cohort, w, w, params.delta, cont)

    t = pm_round_samples(params)
    h = pm_gap(params)
    batch = tuple(ctx.dist.sample(ctx.tapes.pub) for _ in range(t))
    iw = index_width(t)

    tag_children: dict[tuple[int, int], object] = {}

    # Near-match found: per candidate index, re-center and run both containments.
    idx_children: dict[tuple[int, int], object] = {}
    for istar, xi in enumerate(batch):
        shifted = [(i, x ^ xi) for i, x in cohort]
        light = [(i, xs) for i, xs in shifted if xs.popcount() <= w + h]
        if not light:
            continue
        shift_map = dict(light)
        sub_sq = replace(
            params, w=w + h, eps=params.eps / 10.0, delta=params.delta / 10.0
        )

        def cont_reverse(ctx2: _Ctx, pts: Cohort, _map=shift_map, _h=h, _w=w + h, _dsub=params.delta / 10.0):
            recon_cohort = [(i, _map[i]) for i, _ in pts]
            return _build_base(
                ctx2, bp.SQ, recon_cohort, _h, _w, _dsub, cont, swapped=True
            )

        sub_ctx = ctx.fork(ctx.dist.xor_shift(xi))
        sub_ctx.depth += 3
        sub = _build_sq(sub_ctx, sub_sq, light, cont_reverse)
        if sub is None:
            continue
        gate = AliceNode("pm-shift-tag", {(STATUS_WIDTH, CONTINUE): sub})
        ctx.budget.note(ctx.depth + 3, 1)
        idx_children[(iw, istar)] = gate
    if idx_children:
        idx_node = BobNode("pm-xi-index", idx_children)
        ctx.budget.note(ctx.depth + 2, len(idx_children))
        tag_children[(STATUS_WIDTH, CONTINUE)] = idx_node

    # No near-match: halving sets, then accept or recurse on the kept half.
    none_ctx = ctx.fork()
    none_ctx.depth += 1
    n_halving = pm_halving_count(params.delta)
    halves = tuple(none_ctx.tapes.pub.draw_vector(d) for _ in range(n_halving))
    halving_children: dict[tuple[int, int], object] = {}
    accept_ctx = none_ctx.fork()
    accept_ctx.depth += 1
    accept = cont(accept_ctx, list(cohort))
    if accept is not None:
        halving_children[(STATUS_WIDTH, BIG)] = accept
    jw = index_width(n_halving)
    j_children: dict[tuple[int, int], object] = {}
    for j, keep in enumerate(halves):
        if keep.popcount() == 0:
            flat_ctx = none_ctx.fork()
            flat_ctx.depth += 2
            sub = cont(flat_ctx, list(cohort))
        else:
            dom = CoordDomain.full(d).select(keep)
            sub_ctx = none_ctx.fork(none_ctx.dist.restrict_relative(keep))
            sub_ctx.depth += 2
            shrunk = [(i, x.restrict(dom)) for i, x in cohort]
            sub_params = replace(
                params,
                d=dom.size,
                w=max(1.0, 2.0 * params.w / 3.0),
                eps=params.eps / 2.0,
                delta=params.delta / 10.0,
            )
            sub = _build_pm(sub_ctx, sub_params, shrunk, cont)
        if sub is not None:
            j_children[(jw, j)] = sub
    if j_children:
        jnode = BobNode("pm-half-index", j_children)
        none_ctx.budget.note(none_ctx.depth + 2, len(j_children))
        halving_children[(STATUS_WIDTH, CONTINUE)] = jnode
    if halving_children:
        htag = BobNode("pm-halving-tag", halving_children)
        none_ctx.budget.note(none_ctx.depth + 1, len(halving_children))
        carol = CarolNode("pm-halving-sets", d, halves, False, htag)
        none_ctx.budget.note(none_ctx.depth, 1)
        tag_children[(STATUS_WIDTH, BIG)] = carol

    if not tag_children:
        return None
    tag_node = BobNode("pm-xi-tag", tag_children)
    ctx.budget.note(ctx.depth + 1, len(tag_children))
    carol = CarolNode("pm-batch", d, batch, False, tag_node)
    ctx.budget.note(ctx.depth, 1)
    return carol


# ---------------------------------------------------------------------------
# Query side
# ---------------------------------------------------------------------------


class _Walk:
    def __init__(self, tree: ProtocolTree, y_root):
        self.points = tree.dataset.points
        self.y_root = y_root
        self.protocol = tree.meta.protocol
        self.leaves_visited = 0
        self.candidates_scanned = 0
        self.candidates_rejected = 0
        self.bits_walked = 0
        self.matches: set[int] = set()

    def scan(self, leaf: Leaf) -> None:
        self.leaves_visited += 1
        self.candidates_scanned += len(leaf.candidates)
        for i in leaf.candidates:
            ok = (
                match_pm(self.points[i], self.y_root)
                if self.protocol == PM_PROTOCOL
                else subset_of(self.points[i], self.y_root)
            )
            if ok:
                self.matches.add(i)
            else:
                self.candidates_rejected += 1


def query(tree: ProtocolTree, y) -> QueryReport:
    """Walk the tree for query y and report exact matches plus work counters."""
    if tree.meta.protocol == PM_PROTOCOL:
        if not isinstance(y, TernaryPattern) or y.dim != tree.dataset.dim:
            raise ValueError("partial-match tree expects a TernaryPattern of the right dimension")
        if y.star_count() > tree.meta.params.w:
            raise ValueError("query exceeds the compiled wildcard budget")
    else:
        if not isinstance(y, BitVector) or y.dim != tree.dataset.dim:
            raise ValueError("subset tree expects a BitVector of the right dimension")
        if y.popcount() > tree.meta.params.w:
            raise ValueError("query exceeds the compiled sparsity budget")

    walk = _Walk(tree, y)
    if tree.root is not None:
        params = tree.meta.params
        if tree.meta.protocol == PM_PROTOCOL:
            _walk_pm(walk, tree.root, params, y, _walk_final)
        else:
            _walk_sq(walk, tree.root, params, y, _walk_final)
    return QueryReport(
        matches=frozenset(walk.matches),
        leaves_visited=walk.leaves_visited,
        candidates_scanned=walk.candidates_scanned,
        candidates_rejected=walk.candidates_rejected,
        bits_walked=walk.bits_walked,
    )


def _walk_final(walk: _Walk, node) -> None:
    if not isinstance(node, Leaf):
        raise TreeError("expected a leaf at an accepting position")
    walk.scan(node)


def _walk_base(walk: _Walk, node, y_cur, z: float, w: float, mode: str, swapped: bool, cont) -> None:
    if z > w:
        return
    if not swapped:
        if not isinstance(node, MerlinDeferred):
            raise TreeError("expected a deferred advice edge")
        carol = node.child
        if not isinstance(carol, CarolNode) or not carol.private:
            raise TreeError("expected stored parity vectors")
        rs = carol.vectors
        walk.bits_walked += carol.dim * len(rs)
        alice = carol.child
        if not isinstance(alice, AliceNode):
            raise TreeError("expected point parities")
        width = _advice_width_for(mode, y_cur, z)
        reachable = _recon_reachability(mode, y_cur, z, rs)
        for (nbits, a), bob in sorted(alice.children.items()):
            if not isinstance(bob, BobNode):
                raise TreeError("expected reconstruction parities")
            child = bob.children.get((nbits, a))
            if child is None:
                continue
            if not reachable(a):
                continue
            walk.bits_walked += width + 2 * nbits
            cont(walk, child)
        return

    # Swapped wiring: enumerate stored advice values; the walker's own side is
    # the point side here.
    if not isinstance(node, MerlinExplicit):
        raise TreeError("expected an explicit advice edge")
    for (mwidth, _m), carol in sorted(node.children.items()):
        if not isinstance(carol, CarolNode) or not carol.private:
            raise TreeError("expected stored parity vectors")
        rs = carol.vectors
        b = bp.parity_vector(y_cur, rs)
        bob = carol.child
        if not isinstance(bob, BobNode):
            raise TreeError("expected point parities")
        child = bob.children.get((len(rs), b))
        if child is None:
            continue
        walk.bits_walked += mwidth + carol.dim * len(rs) + len(rs)
        if not isinstance(child, AliceNode):
            raise TreeError("expected reconstruction parities")
        for (nbits, a), leafward in sorted(child.children.items()):
            if a != b:
                continue
            walk.bits_walked += nbits
            cont(walk, leafward)


def _advice_width_for(mode: str, y_cur, z: float) -> int:
    if mode == bp.PM:
        return y_cur.star_count()
    return bp.sq_advice_width(y_cur.popcount(), math.floor(z))


def _recon_reachability(mode: str, y_cur, z: float, rs):
    """Exact membership test for the set of parity vectors some advice value
    can reconstruct to: an affine-span check when all payloads are free, a
    direct enumeration when the subset size cap binds."""
    if mode == bp.PM:
        offset = bp.parity_vector(y_cur.ones_vector(), rs)
        basis = _span_basis(_parity_columns(rs, y_cur.star_positions()))
        return lambda target: _reduces_to_zero(basis, target ^ offset)
    zmax = math.floor(z)
    m = y_cur.popcount()
    extra: set[int] = set()
    width = bp.sq_advice_width(m, zmax)
    if (1 << width) > bp.subset_count(m, zmax):
        extra.add(bp.parity_vector(bp.decode_failed_sentinel(y_cur.dim), rs))
    if zmax >= m:
        basis = _span_basis(_parity_columns(rs, tuple(y_cur.ones())))
        return lambda target: _reduces_to_zero(basis, target) or target in extra
    total = bp.subset_count(m, zmax)
    if total > _SUBSET_ENUM_LIMIT:
        raise TreeError("bounded-weight advice enumeration exceeds the guard")
    parities = {
        bp.parity_vector(bp.unrank_subset(y_cur, rank, zmax), rs)
        for rank in range(total)
    } | extra
    return lambda target: target in parities


def _parity_columns(rs, positions) -> list[int]:
    cols = []
    for pos in positions:
        col = 0
        for i, r in enumerate(rs):
            col |= r.get(pos) << i
        cols.append(col)
    return cols


def _span_basis(cols: list[int]) -> list[int]:
    basis: list[int] = []
    for v in cols:
        for b in basis:
            v = min(v, v ^ b)
        if v:
            basis.append(v)
            basis.sort(reverse=True)
    return basis


def _reduces_to_zero(basis: list[int], target: int) -> bool:
    for b in basis:
        target = min(target, target ^ b)
    return target == 0


def _walk_sq(walk: _Walk, node, params: ProtocolParams, y: BitVector, cont) -> None:
    if params.d != y.dim:
        params = params.with_dim(y.dim)
    w = params.w
    if params.is_base_case():
        if not isinstance(node, AliceNode) or node.site != "sq-status":
            raise TreeError("expected the size announcement")
        sub = node.children.get((STATUS_WIDTH, SMALL))
        if sub is not None:
            walk.bits_walked += STATUS_WIDTH
            _walk_base(walk, sub, y, w, w, bp.SQ, False, cont)
        return
    _walk_sq_iter(walk, node, params, y, float(w), 0, cont)


def _walk_sq_iter(
    walk: _Walk, node, params: ProtocolParams, y_cur: BitVector, w_cur: float, iteration: int, cont
) -> None:
    if iteration >= params.max_iters:
        return
    w = params.w
    ell = params.ell
    h = params.h
    t = params.t
    if not isinstance(node, AliceNode) or node.site != "sq-status":
        raise TreeError("expected the size announcement")

    small = node.children.get((STATUS_WIDTH, SMALL))
    if small is not None:
        walk.bits_walked += STATUS_WIDTH
        _walk_base(walk, small, y_cur, w / ell, w, bp.SQ, False, cont)

    big = node.children.get((STATUS_WIDTH, BIG))
    if big is None:
        return
    walk.bits_walked += STATUS_WIDTH
    if not isinstance(big, CarolNode) or big.site != "sq-cond-batch":
        raise TreeError("expected the conditioned sample batch")
    batch = big.vectors
    walk.bits_walked += big.dim * len(batch)
    tag_node = big.child
    if not isinstance(tag_node, BobNode) or tag_node.site != "sq-xi-tag":
        raise TreeError("expected the near-subset announcement")

    istar = next(
        (i for i, xi in enumerate(batch) if xi.diff(y_cur).popcount() <= h), None
    )
    if istar is not None:
        sub = tag_node.children.get((STATUS_WIDTH, CONTINUE))
        if sub is None:
            return
        walk.bits_walked += STATUS_WIDTH
        if not isinstance(sub, BobNode) or sub.site != "sq-xi-index-rank":
            raise TreeError("expected the sample index message")
        xi = batch[istar]
        overflow = xi.diff(y_cur)
        iw = index_width(t)
        rw = bp.sq_advice_width(xi.popcount(), math.floor(h))
        rank = bp.rank_subset(xi, overflow, math.floor(h))
        child = sub.children.get((iw + rw, istar | (rank << iw)))
        if child is None:
            return
        walk.bits_walked += iw + rw
        if not isinstance(child, AliceNode) or child.site != "sq-overlap-tag":
            raise TreeError("expected the overlap announcement")
        onward = child.children.get((STATUS_WIDTH, CONTINUE))
        if onward is None:
            return
        walk.bits_walked += STATUS_WIDTH
        keep = xi.complement()
        dom = CoordDomain.full(keep.dim).select(keep)
        shed = xi.popcount() - overflow.popcount()
        _walk_sq_iter(
            walk, onward, params, y_cur.restrict(dom), w_cur - shed, iteration + 1, cont
        )
        return

    sub = tag_node.children.get((STATUS_WIDTH, BIG))
    if sub is None:
        return
    walk.bits_walked += STATUS_WIDTH
    if not isinstance(sub, CarolNode) or sub.site != "sq-halving-sets":
        raise TreeError("expected the halving sets")
    halves = sub.vectors
    walk.bits_walked += sub.dim * len(halves)
    htag = sub.child
    if not isinstance(htag, BobNode) or htag.site != "sq-halving-tag":
        raise TreeError("expected the halving announcement")
    jstar = next(
        (j for j, s in enumerate(halves) if (y_cur & s).popcount() <= 2.0 * w_cur / 3.0),
        None,
    )
    if jstar is None:
        accept = htag.children.get((STATUS_WIDTH, BIG))
        if accept is not None:
            walk.bits_walked += STATUS_WIDTH
            cont(walk, accept)
        return
    jnode = htag.children.get((STATUS_WIDTH, CONTINUE))
    if jnode is None:
        return
    walk.bits_walked += STATUS_WIDTH
    if not isinstance(jnode, BobNode) or jnode.site != "sq-half-index":
        raise TreeError("expected the halving index")
    jw = index_width(len(halves))
    child = jnode.children.get((jw, jstar))
    if child is None:
        return
    walk.bits_walked += jw
    keep = halves[jstar]
    if keep.popcount() == 0:
        cont(walk, child)
        return
    dom = CoordDomain.full(keep.dim).select(keep)
    sub_params = replace(
        params,
        d=dom.size,
        w=max(1.0, 2.0 * w_cur / 3.0),
        eps=params.eps / 2.0,
        delta=params.delta_prime,
    )
    _walk_sq(walk, child, sub_params, y_cur.restrict(dom), cont)


def _walk_pm(walk: _Walk, node, params: ProtocolParams, y: TernaryPattern, cont) -> None:
    if params.d != y.dim:
        params = params.with_dim(y.dim)
    w = params.w
    if params.is_base_case():
        _walk_base(walk, node, y, w, w, bp.PM, False, cont)
        return

    t = pm_round_samples(params)
    h = pm_gap(params)
    if not isinstance(node, CarolNode) or node.site != "pm-batch":
        raise TreeError("expected the near-match batch")
    batch = node.vectors
    walk.bits_walked += node.dim * len(batch)
    tag_node = node.child
    if not isinstance(tag_node, BobNode) or tag_node.site != "pm-xi-tag":
        raise TreeError("expected the near-match announcement")

    istar = next((i for i, xi in enumerate(batch) if unmatched_count(xi, y) <= h), None)

    if istar is not None:
        idx_node = tag_node.children.get((STATUS_WIDTH, CONTINUE))
        if idx_node is None:
            return
        walk.bits_walked += STATUS_WIDTH
        if not isinstance(idx_node, BobNode) or idx_node.site != "pm-xi-index":
            raise TreeError("expected the near-match index")
        iw = index_width(t)
        gate = idx_node.children.get((iw, istar))
        if gate is None:
            return
        walk.bits_walked += iw
        if not isinstance(gate, AliceNode) or gate.site != "pm-shift-tag":
            raise TreeError("expected the shift weight announcement")
        sub = gate.children.get((STATUS_WIDTH, CONTINUE))
        if sub is None:
            return
        walk.bits_walked += STATUS_WIDTH
        xi = batch[istar]
        d = y.dim
        disagree = (y.one_bits ^ xi.value) & ~y.stars & ((1 << d) - 1)
        y_shift = TernaryPattern(d, y.stars, disagree)
        target = y_shift.star_vector() | y_shift.ones_vector()
        hits = y_shift.ones_vector()
        sub_sq = replace(params, w=w + h, eps=params.eps / 10.0, delta=params.delta / 10.0)

        def cont_reverse(walk2: _Walk, node2) -> None:
            _walk_base(walk2, node2, hits, h, w + h, bp.SQ, True, cont)

        _walk_sq(walk, sub, sub_sq, target, cont_reverse)
        return

    sub = tag_node.children.get((STATUS_WIDTH, BIG))
    if sub is None:
        return
    walk.bits_walked += STATUS_WIDTH
    if not isinstance(sub, CarolNode) or sub.site != "pm-halving-sets":
        raise TreeError("expected the halving sets")
    halves = sub.vectors
    walk.bits_walked += sub.dim * len(halves)
    htag = sub.child
    if not isinstance(htag, BobNode) or htag.site != "pm-halving-tag":
        raise TreeError("expected the halving announcement")
    jstar = next(
        (
            j
            for j, s in enumerate(halves)
            if (y.stars & s.value).bit_count() <= 2.0 * params.w / 3.0
        ),
        None,
    )
    if jstar is None:
        accept = htag.children.get((STATUS_WIDTH, BIG))
        if accept is not None:
            walk.bits_walked += STATUS_WIDTH
            cont(walk, accept)
        return
    jnode = htag.children.get((STATUS_WIDTH, CONTINUE))
    if jnode is None:
        return
    walk.bits_walked += STATUS_WIDTH
    if not isinstance(jnode, BobNode) or jnode.site != "pm-half-index":
        raise TreeError("expected the halving index")
    jw = index_width(len(halves))
    child = jnode.children.get((jw, jstar))
    if child is None:
        return
    walk.bits_walked += jw
    keep = halves[jstar]
    if keep.popcount() == 0:
        cont(walk, child)
        return
    dom = CoordDomain.full(keep.dim).select(keep)
    sub_params = replace(
        params,
        d=dom.size,
        w=max(1.0, 2.0 * params.w / 3.0),
        eps=params.eps / 2.0,
        delta=params.delta / 10.0,
    )
    _walk_pm(walk, child, sub_params, y.restrict(dom), cont)


# ---------------------------------------------------------------------------
# Parameter instantiation from the headline analysis
# ---------------------------------------------------------------------------


def paper_params(n: int, c: float, c1: float = 1.0, c2: float = 1.0) -> tuple[float, float, float]:
    """(eps, delta, w) from the headline instantiation, with the two analysis
    constants supplied by the caller (never pinned numerically upstream; the
    log-squared factor degenerates to 1 at the default c1 = c2 = 1)."""
    if n < 2 or c < 1:
        raise ValueError("need n >= 2 and c >= 1")
    lg = math.log2(c1 * c2)
    log_factor = lg * lg if lg != 0 else 1.0
    logc = math.log2(c) if c > 1 else 1.0
    exponent = (math.log2(n) / (c * logc * logc)) / (1e9 * c1**4 * c2**4 * log_factor)
    eps = 2.0**-exponent
    delta = n ** (-1.0 / (100.0 * c1 * c2))
    w = c * math.log2(n)
    return eps, delta, w


# ---------------------------------------------------------------------------
# Serialization: versioned little-endian binary, magic PMTREE01
# ---------------------------------------------------------------------------

_NODE_ALICE = 1
_NODE_BOB = 2
_NODE_MERLIN_DEFERRED = 3
_NODE_MERLIN_EXPLICIT = 4
_NODE_CAROL = 5
_NODE_LEAF = 6

_SITES = [
    "base-parity-vecs",
    "base-point-parities",
    "base-recon-parities",
    "sq-status",
    "sq-cond-batch",
    "sq-xi-tag",
    "sq-xi-index-rank",
    "sq-overlap-tag",
    "sq-halving-sets",
    "sq-halving-tag",
    "sq-half-index",
    "pm-batch",
    "pm-xi-tag",
    "pm-xi-index",
    "pm-shift-tag",
    "pm-halving-sets",
    "pm-halving-tag",
    "pm-half-index",
]
_SITE_CODE = {s: i for i, s in enumerate(_SITES)}
_MODE_CODE = {bp.PM: 0, bp.SQ: 1}
_MODE_NAME = {v: k for k, v in _MODE_CODE.items()}


def serialize(tree: ProtocolTree) -> bytes:
    buf = io.BytesIO()
    m = tree.meta
    buf.write(MAGIC)
    buf.write(struct.pack("<HB", FORMAT_VERSION, 1 if m.protocol == PM_PROTOCOL else 2))
    buf.write(struct.pack("<Q", m.seed))
    p = m.params
    buf.write(
        struct.pack(
            "<IdddqdQQQ",
            p.d,
            p.w,
            p.eps,
            p.delta,
            -1 if p.t_cap is None else p.t_cap,
            p.base_factor,
            m.node_count,
            m.leaf_count,
            m.candidate_total,
        )
    )
    buf.write(m.fingerprint)
    buf.write(struct.pack("<I", len(m.max_branching)))
    for depth in sorted(m.max_branching):
        buf.write(struct.pack("<II", depth, m.max_branching[depth]))
    if tree.root is None:
        buf.write(struct.pack("<B", 0))
    else:
        buf.write(struct.pack("<B", 1))
        _write_node(buf, tree.root)
    return buf.getvalue()


def _write_bits(buf, value: int, nbits: int) -> None:
    nbytes = (nbits + 7) // 8
    buf.write(struct.pack("<I", nbits))
    buf.write(value.to_bytes(nbytes, "little"))


def _read_bits(buf) -> tuple[int, int]:
    (nbits,) = struct.unpack("<I", buf.read(4))
    nbytes = (nbits + 7) // 8
    value = int.from_bytes(buf.read(nbytes), "little")
    return value, nbits


def _write_children(buf, children: dict) -> None:
    buf.write(struct.pack("<I", len(children)))
    for (nbits, value) in sorted(children):
        _write_bits(buf, value, nbits)
        _write_node(buf, children[(nbits, value)])


def _read_children(buf) -> dict:
    (count,) = struct.unpack("<I", buf.read(4))
    children = {}
    for _ in range(count):
        value, nbits = _read_bits(buf)
        children[(nbits, value)] = _read_node(buf)
    return children


def _write_node(buf, node) -> None:
    if isinstance(node, AliceNode):
        buf.write(struct.pack("<BB", _NODE_ALICE, _SITE_CODE[node.site]))
        _write_children(buf, node.children)
    elif isinstance(node, BobNode):
        buf.write(struct.pack("<BB", _NODE_BOB, _SITE_CODE[node.site]))
        _write_children(buf, node.children)
    elif isinstance(node, MerlinDeferred):
        buf.write(struct.pack("<BBd", _NODE_MERLIN_DEFERRED, _MODE_CODE[node.mode], node.z))
        _write_node(buf, node.child)
    elif isinstance(node, MerlinExplicit):
        buf.write(
            struct.pack(
                "<BBdd", _NODE_MERLIN_EXPLICIT, _MODE_CODE[node.mode], node.z, node.cap
            )
        )
        _write_children(buf, node.children)
    elif isinstance(node, CarolNode):
        buf.write(
            struct.pack(
                "<BBIIB",
                _NODE_CAROL,
                _SITE_CODE[node.site],
                node.dim,
                len(node.vectors),
                1 if node.private else 0,
            )
        )
        nbytes = max(1, (node.dim + 7) // 8)
        for v in node.vectors:
            buf.write(v.value.to_bytes(nbytes, "little"))
        _write_node(buf, node.child)
    elif isinstance(node, Leaf):
        buf.write(struct.pack("<BI", _NODE_LEAF, len(node.candidates)))
        for i in node.candidates:
            buf.write(struct.pack("<I", i))
    else:
        raise TreeError(f"unserializable node {type(node).__name__}")


def _read_node(buf):
    (kind,) = struct.unpack("<B", buf.read(1))
    if kind in (_NODE_ALICE, _NODE_BOB):
        (site_code,) = struct.unpack("<B", buf.read(1))
        children = _read_children(buf)
        cls = AliceNode if kind == _NODE_ALICE else BobNode
        return cls(_SITES[site_code], children)
    if kind == _NODE_MERLIN_DEFERRED:
        mode_code, z = struct.unpack("<Bd", buf.read(9))
        return MerlinDeferred(_MODE_NAME[mode_code], z, _read_node(buf))
    if kind == _NODE_MERLIN_EXPLICIT:
        mode_code, z, cap = struct.unpack("<Bdd", buf.read(17))
        return MerlinExplicit(_MODE_NAME[mode_code], z, cap, _read_children(buf))
    if kind == _NODE_CAROL:
        site_code, dim, count, private = struct.unpack("<BIIB", buf.read(10))
        nbytes = max(1, (dim + 7) // 8)
        vectors = tuple(
            BitVector(dim, int.from_bytes(buf.read(nbytes), "little"))
            for _ in range(count)
        )
        return CarolNode(_SITES[site_code], dim, vectors, private == 1, _read_node(buf))
    if kind == _NODE_LEAF:
        (count,) = struct.unpack("<I", buf.read(4))
        ids = tuple(struct.unpack("<I", buf.read(4))[0] for _ in range(count))
        return Leaf(ids)
    raise TreeError(f"bad node tag {kind}")


def deserialize(data: bytes, dataset: Dataset) -> ProtocolTree:
    buf = io.BytesIO(data)
    if buf.read(8) != MAGIC:
        raise TreeError("bad magic")
    version, proto_code = struct.unpack("<HB", buf.read(3))
    if version != FORMAT_VERSION:
        raise TreeError(f"unsupported format version {version}")
    (seed,) = struct.unpack("<Q", buf.read(8))
    d, w, eps, delta, t_cap, base_factor, node_count, leaf_count, cand_total = struct.unpack(
        "<IdddqdQQQ", buf.read(4 + 8 * 3 + 8 + 8 + 8 * 3)
    )
    fingerprint = buf.read(32)
    if fingerprint != dataset.fingerprint():
        raise TreeError("tree was built over a different dataset")
    (nbranch,) = struct.unpack("<I", buf.read(4))
    max_branching = {}
    for _ in range(nbranch):
        depth, mb = struct.unpack("<II", buf.read(8))
        max_branching[depth] = mb
    (has_root,) = struct.unpack("<B", buf.read(1))
    root = _read_node(buf) if has_root else None
    params = ProtocolParams(
        d=d,
        w=w,
        eps=eps,
        delta=delta,
        t_cap=None if t_cap < 0 else t_cap,
        base_factor=base_factor,
    )
    meta = TreeMeta(
        protocol=PM_PROTOCOL if proto_code == 1 else SQ_PROTOCOL,
        seed=seed,
        params=params,
        fingerprint=fingerprint,
        node_count=node_count,
        leaf_count=leaf_count,
        candidate_total=cand_total,
        max_branching=max_branching,
    )
    return ProtocolTree(root, meta, dataset)


def save_tree(tree: ProtocolTree, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(tree))


def load_tree(path, dataset: Dataset) -> ProtocolTree:
    with open(path, "rb") as fh:
        return deserialize(fh.read(), dataset)
