"""Equilibrium supports over the belief simplex.

For two states a belief is the scalar ``alpha`` (mass on the first state).
On offsets-only instances the set of beliefs that share an equilibrium
support is an interval on which flows and cost are affine, so the cost
profile ``C(alpha)`` is piecewise linear.  :func:`enumerate_supports_two_state`
recovers all pieces by probing, solving, and asking an LP for the extent of
the probed support.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import (
    EPS_SLOPE,
    NotParallelLinks,
    SingularSystem,
    mask_to_support,
    solve_on_support,
    solve_wardrop,
    support_masks,
    verify_wardrop,
)
from .lp import RowBuilder, solve_lp
from .model import Instance, ModelError, alpha_belief


class RequiresTwoStates(ModelError):
    pass


class RequiresOffsetsOnly(ModelError):
    pass


class DiscontinuityDetected(RuntimeError):
    pass


class DegenerateInstance(ModelError):
    pass


class EnumerationError(RuntimeError):
    pass


def canonical_support(instance: Instance, support) -> tuple[tuple[str, ...], ...]:
    """Sort each commodity's edge ids so supports hash and compare as sets."""
    return mask_to_support(instance, support_masks(instance, support))


def _require_two_state_offsets(instance: Instance):
    if instance.n_states != 2:
        raise RequiresTwoStates(f"instance has {instance.n_states} states, need 2")
    if not instance.offsets_only:
        raise RequiresOffsetsOnly("slopes differ between states")


# -- one support -------------------------------------------------------------------


@dataclass
class SupportRegion:
    support: tuple[tuple[str, ...], ...]
    alpha_lo: float
    alpha_hi: float
    cost_at_0: float  # affine cost map evaluated at alpha = 0 and 1
    cost_at_1: float
    loads_at_0: np.ndarray
    loads_at_1: np.ndarray
    midpoint_residual: float = math.nan

    def cost(self, alpha: float) -> float:
        return self.cost_at_0 + (self.cost_at_1 - self.cost_at_0) * alpha

    def loads(self, alpha: float) -> np.ndarray:
        return self.loads_at_0 + (self.loads_at_1 - self.loads_at_0) * alpha

    @property
    def length(self) -> float:
        return self.alpha_hi - self.alpha_lo

    @property
    def cost_lo(self) -> float:
        return self.cost(self.alpha_lo)

    @property
    def cost_hi(self) -> float:
        return self.cost(self.alpha_hi)

    def to_dict(self) -> dict:
        return {
            "alpha_lo": self.alpha_lo, "alpha_hi": self.alpha_hi,
            "cost_lo": self.cost_lo, "cost_hi": self.cost_hi,
            "cost_slope": self.cost_at_1 - self.cost_at_0,
            "support": [list(s) for s in self.support],
            "midpoint_residual": self.midpoint_residual,
        }


def region_lp(instance: Instance, support, objective: str = "feasible"):
    """Build and solve the belief-region LP of ``support``.

    Variables are ``alpha``, the per-commodity flows on support edges
    (scaled by the largest demand) and free potentials.  Support edges hold
    with equality, other permitted edges with ``<=``.  ``objective`` is
    ``"min"``, ``"max"`` or ``"feasible"``; returns the optimal alpha or None.
    """
    mask = support_masks(instance, support)
    r, m, n = len(instance.commodities), len(instance.edges), len(instance.vertices)
    scale = float(instance.demands.max(initial=1.0))
    slope = instance.slopes[:, 0]
    off = instance.offsets
    db = off[:, 0] - off[:, 1]  # offset(alpha) = off2 + alpha * db

    xcol: dict[tuple[int, int], int] = {}
    for i, k in zip(*np.nonzero(mask)):
        xcol[(int(i), int(k))] = 1 + len(xcol)
    pbase = 1 + len(xcol)
    ncols = pbase + r * n

    def pcol(i, v):
        return pbase + i * n + v

    eq = RowBuilder(ncols)
    ub = RowBuilder(ncols)
    for i in range(r):
        for k in np.flatnonzero(instance.allowed_masks[i]):
            u, w = int(instance.tails[k]), int(instance.heads[k])
            coeffs = {0: -db[k]}
            coeffs[pcol(i, w)] = coeffs.get(pcol(i, w), 0.0) + 1.0
            coeffs[pcol(i, u)] = coeffs.get(pcol(i, u), 0.0) - 1.0
            for j in range(r):
                if mask[j, k]:
                    coeffs[xcol[(j, int(k))]] = -slope[k] * scale
            (eq if mask[i, k] else ub).add(coeffs, off[k, 1])
    for i, com in enumerate(instance.commodities):
        s, t = instance.vertex_index[com.source], instance.vertex_index[com.target]
        ks = np.flatnonzero(mask[i])
        touched = {s, t} | set(instance.tails[ks].tolist()) | set(instance.heads[ks].tolist())
        for v in sorted(touched):
            coeffs: dict[int, float] = {}
            for k in ks:
                if instance.tails[k] == v:
                    coeffs[xcol[(i, int(k))]] = coeffs.get(xcol[(i, int(k))], 0.0) + 1.0
                if instance.heads[k] == v:
                    coeffs[xcol[(i, int(k))]] = coeffs.get(xcol[(i, int(k))], 0.0) - 1.0
            rhs = com.demand / scale if v == s else (-com.demand / scale if v == t else 0.0)
            eq.add(coeffs, rhs)

    bounds = [(0.0, 1.0)] + [(0.0, None)] * len(xcol) + [(None, None)] * (r * n)
    for i, com in enumerate(instance.commodities):
        bounds[pcol(i, instance.vertex_index[com.source])] = (0.0, 0.0)
    c = np.zeros(ncols)
    c[0] = {"min": 1.0, "max": -1.0, "feasible": 0.0}[objective]
    A_eq, b_eq = eq.matrix()
    A_ub, b_ub = ub.matrix()
    res = solve_lp(c, A_eq, b_eq, A_ub, b_ub, bounds)
    if res.status != "optimal":
        return None
    return float(res.x[0])


def support_region(instance: Instance, support, eps_slope: float = EPS_SLOPE,
                   polish: bool = True) -> SupportRegion | None:
    """Interval of beliefs whose equilibrium has exactly ``support``; None when empty.

    Two LPs give the interval; with ``polish`` its ends are then sharpened by
    bisection on the exact support system, since LP tolerances (about 1e-7)
    can exceed the width of the thinnest regions.
    """
    _require_two_state_offsets(instance)
    mask = support_masks(instance, support)
    lo = region_lp(instance, mask, "min")
    if lo is None:
        return None
    hi = region_lp(instance, mask, "max")
    if hi is None:
        return None
    lo, hi = max(0.0, lo), min(1.0, hi)
    if polish:
        lo, hi = _polish(instance, mask, lo, hi, eps_slope)
    s0 = solve_on_support(instance, alpha_belief(0.0), mask, eps_slope=eps_slope)
    s1 = solve_on_support(instance, alpha_belief(1.0), mask, eps_slope=eps_slope)
    return SupportRegion(mask_to_support(instance, mask), lo, hi, s0.cost, s1.cost, s0.loads, s1.loads)


def _polish(instance, mask, lo, hi, eps_slope, tol=1e-12):
    def ok(alpha):
        return solve_on_support(instance, alpha_belief(alpha), mask, eps_slope=eps_slope, tol=tol).feasible

    inside = next((a for a in (0.5 * (lo + hi), lo + 0.25 * (hi - lo), lo + 0.75 * (hi - lo)) if ok(a)), None)
    if inside is None:
        return lo, hi

    def edge(limit, sign):
        # walk outwards from the LP end until infeasible, then bisect
        end = lo if sign < 0 else hi
        step = 1e-7
        good = inside
        near = end - sign * step
        if (near - inside) * sign > 0 and ok(near):
            good = near
        while True:
            bad = end + sign * step
            if (bad - limit) * sign >= 0:
                if ok(limit):
                    return limit
                bad = limit
                break
            if not ok(bad):
                break
            good = bad
            step *= 10.0
        for _ in range(200):
            mid = 0.5 * (good + bad)
            if mid in (good, bad):
                break
            if ok(mid):
                good = mid
            else:
                bad = mid
        return good

    return edge(0.0, -1), edge(1.0, +1)


# -- atlas ----------------------------------------------------------------------------


@dataclass
class SupportAtlas:
    regions: list[SupportRegion]
    lp_solves: int = 0
    probes: int = 0

    @property
    def breakpoints(self) -> list[float]:
        if not self.regions:
            return []
        return [self.regions[0].alpha_lo] + [reg.alpha_hi for reg in self.regions]

    @property
    def interior_breakpoints(self) -> list[float]:
        return self.breakpoints[1:-1]

    @property
    def supports(self) -> list[tuple[tuple[str, ...], ...]]:
        return [reg.support for reg in self.regions]

    @property
    def distinct_supports(self) -> set:
        return set(self.supports)

    def region_at(self, alpha: float) -> SupportRegion:
        for reg in self.regions:
            if alpha < reg.alpha_hi:
                return reg
        return self.regions[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha_lo", "alpha_hi", "cost_lo", "cost_hi", "support"])
        for reg in self.regions:
            w.writerow([repr(reg.alpha_lo), repr(reg.alpha_hi), repr(reg.cost_lo), repr(reg.cost_hi),
                        "|".join(" ".join(s) for s in reg.support)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"regions": [reg.to_dict() for reg in self.regions],
                "breakpoints": self.breakpoints, "lp_solves": self.lp_solves, "probes": self.probes}


def _probe_support(instance, alpha, support_eps, eps_slope, gap_tol):
    res = solve_wardrop(instance, alpha_belief(alpha), fw_gap_tol=gap_tol, support_eps=support_eps,
                        eps_slope=eps_slope)
    return res.support


def enumerate_supports_two_state(instance: Instance, boundary_tol: float = 1e-10, seed: int = 42,
                                 support_eps: float = 1e-7, eps_slope: float = EPS_SLOPE,
                                 gap_tol: float = 1e-9, verify: bool = True) -> SupportAtlas:
    """Cover ``alpha in [0, 1]`` by support regions.

    Each uncovered interval is probed near its midpoint (seeded jitter of
    relative size 1e-6), the equilibrium support there is computed, and two
    LPs give the full interval of that support; the uncovered flanks are
    processed the same way until they are shorter than ``boundary_tol``.
    """
    from .lp import count_lps

    _require_two_state_offsets(instance)
    rng = np.random.default_rng(seed)
    found: list[SupportRegion] = []
    pending = [(0.0, 1.0)]
    probes = 0
    with count_lps() as counter:
        while pending:
            lo, hi = pending.pop()
            length = hi - lo
            probe = 0.5 * (lo + hi) + rng.uniform(-1.0, 1.0) * 1e-6 * length
            probes += 1
            region = None
            for eps in (support_eps, support_eps * 100, support_eps / 100):
                support = _probe_support(instance, probe, eps, eps_slope, gap_tol)
                try:
                    region = support_region(instance, support, eps_slope)
                except SingularSystem:
                    region = None
                if region is not None and region.alpha_lo - 1e-12 <= probe <= region.alpha_hi + 1e-12:
                    break
                region = None
            if region is None:
                raise EnumerationError(f"no consistent support found at alpha={probe!r}")
            region.alpha_lo = max(lo, min(region.alpha_lo, probe))
            region.alpha_hi = min(hi, max(region.alpha_hi, probe))
            found.append(region)
            if region.alpha_hi < hi - boundary_tol:
                pending.append((region.alpha_hi, hi))
            if region.alpha_lo > lo + boundary_tol:
                pending.append((lo, region.alpha_lo))
        lp_solves = counter.count
    atlas = SupportAtlas(_stitch(found), lp_solves, probes)
    if verify:
        for reg in atlas.regions:
            mid = 0.5 * (reg.alpha_lo + reg.alpha_hi)
            sol = solve_on_support(instance, alpha_belief(mid), reg.support, eps_slope=eps_slope)
            reg.midpoint_residual = verify_wardrop(instance, alpha_belief(mid), np.maximum(sol.flow, 0.0)).residual
    return atlas


def _stitch(regions: list[SupportRegion]) -> list[SupportRegion]:
    regions = sorted(regions, key=lambda reg: (reg.alpha_lo, reg.alpha_hi))
    out: list[SupportRegion] = []
    for reg in regions:
        if out and out[-1].support == reg.support:
            out[-1].alpha_hi = max(out[-1].alpha_hi, reg.alpha_hi)
            continue
        out.append(reg)
    # close the tiny gaps left by boundary_tol
    if out:
        out[0].alpha_lo = 0.0
        out[-1].alpha_hi = 1.0
    for left, right in zip(out, out[1:]):
        cut = 0.5 * (left.alpha_hi + right.alpha_lo)
        left.alpha_hi = right.alpha_lo = cut
    return out


# -- cost profile --------------------------------------------------------------------


@dataclass
class CostProfile:
    """Continuous piecewise-linear ``C(alpha)`` on ``[0, 1]``."""

    breakpoints: np.ndarray
    values: np.ndarray
    supports: list = field(default_factory=list)

    def __call__(self, alpha):
        return np.interp(alpha, self.breakpoints, self.values)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)

    def at_mu2(self, mu2):
        """Evaluate on the second-state axis, ``mu2 = 1 - alpha``."""
        return self(1.0 - np.asarray(mu2, dtype=float))


def cost_profile(atlas: SupportAtlas, tol: float = 1e-6) -> CostProfile:
    """Stitch the affine pieces, checking continuity at every breakpoint."""
    regs = atlas.regions
    if not regs:
        raise ValueError("empty atlas")
    xs = [regs[0].alpha_lo]
    ys = [regs[0].cost_lo]
    for left, right in zip(regs, regs[1:]):
        a, b = left.cost_hi, right.cost_lo
        if abs(a - b) > tol * max(1.0, abs(a), abs(b)):
            raise DiscontinuityDetected(f"jump {a!r} -> {b!r} at alpha={left.alpha_hi!r}")
        xs.append(left.alpha_hi)
        ys.append(0.5 * (a + b))
    xs.append(regs[-1].alpha_hi)
    ys.append(regs[-1].cost_hi)
    return CostProfile(np.array(xs), np.array(ys), [reg.support for reg in regs])


def is_concave(profile: CostProfile, tol: float = 1e-9) -> bool:
    """Consecutive slopes non-increasing, up to ``tol`` relative to the cost scale."""
    s = profile.slopes
    if len(s) < 2:
        return True
    scale = 1.0 + float(np.max(np.abs(profile.values)))
    return bool(np.all(np.diff(s) <= tol * scale))


def lower_convex_envelope(xs, ys) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of the lower convex hull of the points ``(xs, ys)``."""
    order = np.lexsort((ys, xs))
    hull: list[tuple[float, float]] = []
    for k in order:
        p = (float(xs[k]), float(ys[k]))
        if hull and p[0] == hull[-1][0]:
            continue
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    hx, hy = zip(*hull)
    return np.array(hx), np.array(hy)


def envelope_value(profile: CostProfile, alpha: float) -> float:
    hx, hy = lower_convex_envelope(profile.breakpoints, profile.values)
    return float(np.interp(alpha, hx, hy))


# -- parallel links ----------------------------------------------------------------------


@dataclass
class OrderingCell:
    alpha_lo: float
    alpha_hi: float
    ordering: tuple[str, ...]


def _parallel_check(instance: Instance):
    if not instance.parallel_links:
        raise NotParallelLinks("instance is not a parallel-links network")


def offset_orderings_two_state(instance: Instance) -> list[OrderingCell]:
    """Orderings of links by expected offset, one per interval between crossings.

    Lines with identical offsets stay adjacent in declaration order.
    """
    _parallel_check(instance)
    if instance.n_states != 2:
        raise RequiresTwoStates("two states required")
    b1, b2 = instance.offsets[:, 0], instance.offsets[:, 1]
    m = len(instance.edges)
    cuts = {0.0, 1.0}
    for p, q in itertools.combinations(range(m), 2):
        dp = (b1[p] - b2[p]) - (b1[q] - b2[q])
        if dp != 0.0:
            a = (b2[q] - b2[p]) / dp
            if 0.0 < a < 1.0:
                cuts.add(float(a))
    xs = sorted(cuts)
    cells: list[OrderingCell] = []
    for lo, hi in zip(xs, xs[1:]):
        mid = 0.5 * (lo + hi)
        vals = mid * b1 + (1 - mid) * b2
        order = tuple(instance.edges[k].id for k in np.lexsort((np.arange(m), vals)))
        if cells and cells[-1].ordering == order:
            cells[-1].alpha_hi = hi
        else:
            cells.append(OrderingCell(lo, hi, order))
    return cells


def _orderings_general(instance: Instance, seed: int = 42) -> list[tuple[str, ...]]:
    """Offset orderings of full-dimensional cells of the simplex, by DFS over adjacent flips."""
    off = instance.offsets
    m, d = off.shape
    ids = [e.id for e in instance.edges]
    identical = {(p, q) for p in range(m) for q in range(m) if np.array_equal(off[p], off[q])}
    _check_degenerate(off, identical)

    def feasible(order):
        # maximize slack s: b_next - b_prev >= s for distinct consecutive lines, mu in simplex
        rb = RowBuilder(d + 1)
        for p, q in zip(order, order[1:]):
            if (p, q) in identical:
                continue
            coeffs = {j: float(off[p, j] - off[q, j]) for j in range(d)}
            coeffs[d] = 1.0
            rb.add(coeffs, 0.0)
        A, b = rb.matrix()
        eq = RowBuilder(d + 1)
        eq.add({j: 1.0 for j in range(d)}, 1.0)
        Ae, be = eq.matrix()
        c = np.zeros(d + 1)
        c[d] = -1.0
        res = solve_lp(c, Ae, be, A, b, [(0, None)] * d + [(None, 1.0)])
        return res.status == "optimal" and -res.objective > 1e-9

    rng = np.random.default_rng(seed)
    mu = rng.dirichlet(np.ones(d))
    start = tuple(int(k) for k in np.lexsort((np.arange(m), off @ mu)))
    seen = {start}
    stack = [start]
    while stack:
        order = stack.pop()
        for pos in range(m - 1):
            p, q = order[pos], order[pos + 1]
            if (p, q) in identical:
                continue
            flipped = order[:pos] + (q, p) + order[pos + 2:]
            if flipped in seen or not _identical_sorted(flipped, identical):
                continue
            if feasible(flipped):
                seen.add(flipped)
                stack.append(flipped)
    return sorted(tuple(ids[k] for k in order) for order in seen)


def _identical_sorted(order, identical) -> bool:
    # identical lines must keep declaration order relative to each other
    for a in range(len(order)):
        for b in range(a + 1, len(order)):
            if (order[a], order[b]) in identical and order[a] > order[b]:
                return False
    return True


def _check_degenerate(off: np.ndarray, identical):
    m, d = off.shape
    for p, q, w in itertools.combinations(range(m), 3):
        if (p, q) in identical or (q, w) in identical or (p, w) in identical:
            continue
        eq = RowBuilder(d)
        eq.add({j: float(off[p, j] - off[q, j]) for j in range(d)}, 0.0)
        eq.add({j: float(off[q, j] - off[w, j]) for j in range(d)}, 0.0)
        eq.add({j: 1.0 for j in range(d)}, 1.0)
        A, b = eq.matrix()
        if solve_lp(np.zeros(d), A, b, bounds=[(0, None)] * d).status == "optimal":
            raise DegenerateInstance(f"offsets of links {p}, {q}, {w} coincide at a belief")


def enumerate_supports_parallel(instance: Instance, seed: int = 42) -> set:
    """Superset of all equilibrium support vectors on a parallel-links network.

    Links are grouped into classes by the set of populations allowed on
    them.  Within one offset ordering a class is used on a cheapest-offset
    prefix; each population uses some of its classes.  The candidates are
    all such combinations, collected over every ordering.
    """
    _parallel_check(instance)
    r = len(instance.commodities)
    allowed = instance.allowed_masks
    ids = [e.id for e in instance.edges]
    if instance.n_states == 2:
        orderings = [cell.ordering for cell in offset_orderings_two_state(instance)]
    elif instance.n_states == 1:
        orderings = [tuple(ids[k] for k in np.lexsort((np.arange(len(ids)), instance.offsets[:, 0])))]
    else:
        orderings = _orderings_general(instance, seed)

    classes: dict[tuple[bool, ...], list[str]] = {}
    for k, e in enumerate(ids):
        key = tuple(bool(allowed[i, k]) for i in range(r))
        if any(key):
            classes.setdefault(key, []).append(e)
    keys = list(classes)
    pop_classes = [[c for c, key in enumerate(keys) if key[i]] for i in range(r)]

    result: set = set()
    for order in orderings:
        rank = {e: pos for pos, e in enumerate(order)}
        sorted_classes = [sorted(classes[key], key=rank.__getitem__) for key in keys]
        choices_per_pop = [
            [sub for size in range(1, len(pc) + 1) for sub in itertools.combinations(pc, size)]
            for pc in pop_classes
        ]
        for pop_choice in itertools.product(*choices_per_pop):
            used = sorted(set(itertools.chain.from_iterable(pop_choice)))
            prefix_opts = [range(1, len(sorted_classes[c]) + 1) for c in used]
            for lengths in itertools.product(*prefix_opts):
                prefix = {c: sorted_classes[c][:n] for c, n in zip(used, lengths)}
                vec = tuple(
                    tuple(sorted((e for c in pop_choice[i] for e in prefix[c]), key=instance.edge_index.get))
                    for i in range(r)
                )
                result.add(vec)
    return result
