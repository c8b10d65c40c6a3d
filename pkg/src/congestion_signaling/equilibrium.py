"""Wardrop equilibria for a fixed belief.

Two routes to the same answer:

* :func:`solve_wardrop` minimizes the Beckmann potential with Frank-Wolfe
  (exact line search) and then snaps the approximate flow onto its exact
  support with :func:`solve_on_support`;
* :func:`parallel_links_wardrop` water-fills single-commodity parallel links
  in closed form.

Flows are per-commodity edge flows stored as an ``(r, m)`` array.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .model import Belief, Instance, ModelError, _closure, make_belief

EPS_SLOPE = 1e-9


class EquilibriumError(RuntimeError):
    pass


class NoPath(EquilibriumError):
    pass


class InfeasibleFlow(EquilibriumError):
    pass


class SingularSystem(EquilibriumError):
    pass


class NotParallelLinks(ModelError):
    pass


class NonConvergence(EquilibriumError):
    def __init__(self, message: str, best: "EquilibriumResult"):
        super().__init__(message)
        self.best = best


SupportVector = tuple[tuple[str, ...], ...]


@dataclass
class EquilibriumResult:
    flow: np.ndarray  # (r, m)
    potentials: np.ndarray  # (r, n); inf where unreachable
    support: SupportVector
    cost: float
    kkt_residual: float
    relative_gap: float = 0.0
    iterations: int = 0
    method: str = ""

    @property
    def loads(self) -> np.ndarray:
        return self.flow.sum(axis=0)

    def to_dict(self, instance: Instance) -> dict:
        ids = [e.id for e in instance.edges]
        pots = []
        for row in self.potentials:
            pots.append({v: (None if not math.isfinite(p) else float(p)) for v, p in zip(instance.vertices, row)})
        return {
            "loads": {e: float(x) for e, x in zip(ids, self.loads)},
            "flows": [{e: float(x) for e, x in zip(ids, row) if x != 0.0} for row in self.flow],
            "potentials": pots,
            "support": [list(s) for s in self.support],
            "cost": float(self.cost),
            "kkt_residual": float(self.kkt_residual),
            "relative_gap": float(self.relative_gap),
            "iterations": self.iterations,
            "method": self.method,
        }


def _as_belief(instance: Instance, belief) -> Belief:
    if isinstance(belief, Belief):
        if len(belief) != instance.n_states:
            raise ModelError("belief length does not match the number of states")
        return belief
    return make_belief(belief, instance.n_states)


def edge_costs(instance: Instance, belief, loads: np.ndarray) -> np.ndarray:
    slope, offset = instance.expected_params(belief)
    return slope * loads + offset


def regularized_slopes(slope: np.ndarray, eps_slope: float = EPS_SLOPE) -> np.ndarray:
    return np.where(slope > 0, slope, eps_slope)


# -- shortest paths ------------------------------------------------------------------


def _dijkstra(adj, n: int, source: int, cost: list[float]) -> np.ndarray:
    dist = [math.inf] * n
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for k, w in adj[u]:
            nd = d + cost[k]
            if nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return np.array(dist)


def shortest_distances(instance: Instance, costs: np.ndarray) -> np.ndarray:
    """``(r, n)`` distances from each commodity's source over its allowed edges."""
    n = len(instance.vertices)
    c = np.asarray(costs, dtype=float).tolist()
    out = np.empty((len(instance.commodities), n))
    for i, com in enumerate(instance.commodities):
        out[i] = _dijkstra(instance.adjacency[i], n, instance.vertex_index[com.source], c)
    return out


def _lexicographic_path(adj, dist, rdist, s: int, t: int, cost: list[float]) -> list[int]:
    """Edge-index-lexicographically first shortest s-t path (simple)."""
    total = dist[t]
    tol = 1e-12 * (1.0 + abs(total))
    path: list[int] = []
    visited = {s}
    stack = [(s, iter(adj[s]))]
    while stack:
        u, it = stack[-1]
        if u == t:
            return path
        advanced = False
        for k, w in it:
            if w in visited or not math.isfinite(rdist[w]):
                continue
            if abs(dist[u] + cost[k] + rdist[w] - total) <= tol:
                visited.add(w)
                path.append(k)
                stack.append((w, iter(adj[w])))
                advanced = True
                break
        if not advanced:
            stack.pop()
            if path:
                path.pop()
    raise NoPath("no shortest path could be traced")


def all_or_nothing(instance: Instance, costs: np.ndarray) -> np.ndarray:
    """Route every commodity's demand on one shortest path.

    Ties are broken towards the path whose edge-index sequence is
    lexicographically smallest, so the result is reproducible.
    """
    costs = np.asarray(costs, dtype=float)
    if np.any(costs < 0):
        raise ValueError("edge costs must be non-negative")
    flow, _ = _all_or_nothing(instance, costs)
    return flow


def _all_or_nothing(instance: Instance, costs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(instance.vertices)
    c = costs.tolist()
    flow = np.zeros((len(instance.commodities), len(instance.edges)))
    dists = np.empty((len(instance.commodities), n))
    for i, com in enumerate(instance.commodities):
        s, t = instance.vertex_index[com.source], instance.vertex_index[com.target]
        dist = _dijkstra(instance.adjacency[i], n, s, c)
        if not math.isfinite(dist[t]):
            raise NoPath(f"target {com.target} unreachable from {com.source}")
        rdist = _dijkstra(instance.reverse_adjacency[i], n, t, c)
        for k in _lexicographic_path(instance.adjacency[i], dist, rdist, s, t, c):
            flow[i, k] = com.demand
        dists[i] = dist
    return flow, dists


# -- Beckmann potential & verification -------------------------------------------------


def conservation_residual(instance: Instance, flow: np.ndarray) -> float:
    """Largest conservation error, relative to the commodity's demand."""
    n = len(instance.vertices)
    worst = 0.0
    for i, com in enumerate(instance.commodities):
        net = np.zeros(n)
        np.add.at(net, instance.tails, flow[i])
        np.subtract.at(net, instance.heads, flow[i])
        net[instance.vertex_index[com.source]] -= com.demand
        net[instance.vertex_index[com.target]] += com.demand
        scale = com.demand if com.demand > 0 else 1.0
        worst = max(worst, float(np.max(np.abs(net))) / scale)
        off = ~instance.allowed_masks[i]
        if off.any():
            worst = max(worst, float(np.max(np.abs(flow[i][off]))) / scale)
    return worst


def _as_flow(instance: Instance, flow) -> np.ndarray:
    x = np.asarray(flow, dtype=float)
    r, m = len(instance.commodities), len(instance.edges)
    if x.shape == (m,) and r == 1:
        x = x.reshape(1, m)
    if x.shape != (r, m):
        raise ValueError(f"flow must have shape {(r, m)}, got {x.shape}")
    return x


def beckmann_value(instance: Instance, belief, flow, tol: float = 1e-9) -> float:
    """Closed-form Beckmann potential ``sum(slope x^2 / 2 + offset x)``."""
    mu = _as_belief(instance, belief)
    x = _as_flow(instance, flow)
    if instance.commodities and conservation_residual(instance, x) > tol:
        raise InfeasibleFlow("flow violates conservation")
    if np.any(x < -tol * max(1.0, float(instance.demands.max(initial=0.0)))):
        raise InfeasibleFlow("negative edge flow")
    load = x.sum(axis=0)
    slope, offset = instance.expected_params(mu)
    return float(np.sum(0.5 * slope * load**2 + offset * load))


@dataclass
class VerificationReport:
    conservation: float
    negativity: float
    complementarity: float
    tol: float

    @property
    def residual(self) -> float:
        return max(self.conservation, self.negativity, self.complementarity)

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol


def verify_wardrop(instance: Instance, belief, flow, tol: float = 1e-6) -> VerificationReport:
    """Check the optimality conditions of the Beckmann program.

    With shortest-path potentials ``pi`` the dual inequalities hold by
    construction, so what remains is primal feasibility and
    complementarity.  The latter is measured per commodity as
    ``sum_e x_ei * (c_e - pi_head + pi_tail) / (d_i * max(1, pi_t))``.
    """
    mu = _as_belief(instance, belief)
    x = _as_flow(instance, flow)
    if not instance.commodities:
        return VerificationReport(0.0, 0.0, 0.0, tol)
    demands = np.where(instance.demands > 0, instance.demands, 1.0)
    neg = float(np.max(np.maximum(-x, 0.0) / demands[:, None], initial=0.0))
    cons = conservation_residual(instance, x)
    costs = edge_costs(instance, mu, x.sum(axis=0))
    if np.any(costs < 0):
        return VerificationReport(cons, max(neg, 1.0), math.inf, tol)
    dist = shortest_distances(instance, costs)
    comp = 0.0
    for i, com in enumerate(instance.commodities):
        pt = dist[i, instance.vertex_index[com.target]]
        if not math.isfinite(pt):
            return VerificationReport(cons, neg, math.inf, tol)
        mask = instance.allowed_masks[i]
        du, dv = dist[i, instance.tails], dist[i, instance.heads]
        finite = mask & np.isfinite(du) & np.isfinite(dv)
        red = np.zeros_like(costs)
        red[finite] = costs[finite] + du[finite] - dv[finite]
        pos = np.maximum(x[i], 0.0)
        comp = max(comp, float(np.sum(pos * np.maximum(red, 0.0))) / (demands[i] * max(1.0, abs(pt))))
    return VerificationReport(cons, neg, comp, tol)


# -- support-restricted linear system ---------------------------------------------------


@dataclass
class SupportSolution:
    flow: np.ndarray  # (r, m), may be negative
    potentials: np.ndarray  # (r, n), nan off the support
    cost: float
    negative_flows: list[tuple[int, str, float]] = field(default_factory=list)
    cost_violations: list[tuple[int, str, float]] = field(default_factory=list)
    rank_deficient: bool = False

    @property
    def loads(self) -> np.ndarray:
        return self.flow.sum(axis=0)

    @property
    def feasible(self) -> bool:
        return not self.negative_flows and not self.cost_violations


def support_masks(instance: Instance, support) -> np.ndarray:
    """Boolean ``(r, m)`` mask from a support vector (edge ids) or a mask."""
    arr = np.asarray(support, dtype=object)
    if arr.dtype == object and len(support) and not isinstance(support[0], np.ndarray) and \
            not (len(support[0]) and isinstance(support[0][0], (bool, np.bool_))):
        mask = np.zeros((len(instance.commodities), len(instance.edges)), dtype=bool)
        if len(support) != len(instance.commodities):
            raise ValueError("support needs one edge set per commodity")
        for i, ids in enumerate(support):
            for e in ids:
                mask[i, instance.edge_index[e]] = True
        return mask
    mask = np.asarray(support, dtype=bool)
    return mask.reshape(len(instance.commodities), len(instance.edges))


def mask_to_support(instance: Instance, mask: np.ndarray) -> SupportVector:
    ids = [e.id for e in instance.edges]
    return tuple(tuple(ids[k] for k in np.flatnonzero(row)) for row in mask)


def _component_check(instance: Instance, i: int, row: np.ndarray) -> set[int]:
    com = instance.commodities[i]
    s, t = instance.vertex_index[com.source], instance.vertex_index[com.target]
    ks = np.flatnonzero(row)
    verts = {s, t} | set(instance.tails[ks].tolist()) | set(instance.heads[ks].tolist())
    out: dict[int, list[int]] = {v: [] for v in verts}
    und: dict[int, list[int]] = {v: [] for v in verts}
    for k in ks:
        u, w = int(instance.tails[k]), int(instance.heads[k])
        out[u].append(w)
        und[u].append(w)
        und[w].append(u)

    def reach(adj):
        seen = {s}
        stack = [s]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    if t not in reach(out):
        raise SingularSystem(f"support does not connect {com.source} to {com.target} (commodity {i})")
    if reach(und) != verts:
        raise SingularSystem(f"support of commodity {i} has components detached from {com.source}")
    return verts


def _routable(instance: Instance, i: int, row: np.ndarray) -> np.ndarray:
    """Support edges lying on some source-target walk inside the support."""
    com = instance.commodities[i]
    ks = np.flatnonzero(row)
    fwd: dict[int, list[int]] = {}
    bwd: dict[int, list[int]] = {}
    for k in ks:
        u, w = int(instance.tails[k]), int(instance.heads[k])
        fwd.setdefault(u, []).append(w)
        bwd.setdefault(w, []).append(u)
    from_s = _closure(instance.vertex_index[com.source], fwd)
    to_t = _closure(instance.vertex_index[com.target], bwd)
    out = np.zeros_like(row, dtype=bool)
    for k in ks:
        out[k] = int(instance.tails[k]) in from_s and int(instance.heads[k]) in to_t
    return out


def _extend_potentials(instance: Instance, pots: np.ndarray, mask: np.ndarray, costs: np.ndarray):
    """Fill potentials of vertices reached only by flow-free tight edges."""
    for i in range(len(pots)):
        ks = np.flatnonzero(mask[i])
        changed = True
        while changed:
            changed = False
            for k in ks:
                u, w = int(instance.tails[k]), int(instance.heads[k])
                if np.isnan(pots[i, w]) and not np.isnan(pots[i, u]):
                    pots[i, w] = pots[i, u] + costs[k]
                    changed = True
                elif np.isnan(pots[i, u]) and not np.isnan(pots[i, w]):
                    pots[i, u] = pots[i, w] - costs[k]
                    changed = True


def solve_on_support(instance: Instance, belief, support, eps_slope: float = EPS_SLOPE,
                     tol: float = 1e-9) -> SupportSolution:
    """Solve the equality system of a Wardrop equilibrium with fixed active edges.

    Unknowns are per-commodity flows on support edges and vertex potentials
    (source potential pinned at zero); equations are potential differences
    along support edges plus flow conservation.  When zero-slope edges make
    this system singular they are given slope ``eps_slope`` instead, which
    restores invertibility of the reduced Laplacian.  The solution
    is returned even when it is not an equilibrium; ``negative_flows`` and
    ``cost_violations`` say which inequality fails.
    """
    mu = _as_belief(instance, belief)
    full_mask = support_masks(instance, support)
    slope, offset = instance.expected_params(mu)
    r, m, n = len(instance.commodities), len(instance.edges), len(instance.vertices)
    scale = float(max(instance.demands.max(initial=1.0), 1e-300))

    # tight edges off every support path carry no flow; they only fix potentials
    mask = np.zeros_like(full_mask)
    x_cols: dict[tuple[int, int], int] = {}
    p_cols: dict[tuple[int, int], int] = {}
    vert_sets = []
    for i, com in enumerate(instance.commodities):
        _component_check(instance, i, full_mask[i])
        mask[i] = _routable(instance, i, full_mask[i])
        verts = _component_check(instance, i, mask[i])
        vert_sets.append(verts)
        for k in np.flatnonzero(mask[i]):
            x_cols[(i, int(k))] = len(x_cols)
    nx_ = len(x_cols)
    for i, com in enumerate(instance.commodities):
        s = instance.vertex_index[com.source]
        for v in sorted(vert_sets[i]):
            if v != s:
                p_cols[(i, v)] = nx_ + len(p_cols)
    size = nx_ + len(p_cols)
    users = {k: [i for i in range(r) if mask[i, k]] for k in range(m)}

    M = np.zeros((size, size))
    rhs = np.zeros(size)
    slope_entries: list[tuple[int, int, int]] = []
    row = 0
    for (i, k), _ in x_cols.items():
        u, w = int(instance.tails[k]), int(instance.heads[k])
        if (i, w) in p_cols:
            M[row, p_cols[(i, w)]] += 1.0
        if (i, u) in p_cols:
            M[row, p_cols[(i, u)]] -= 1.0
        for j in users[k]:
            slope_entries.append((row, x_cols[(j, k)], k))
        rhs[row] = offset[k]
        row += 1
    for (i, v), _ in p_cols.items():
        for k in np.flatnonzero(mask[i]):
            if instance.heads[k] == v:
                M[row, x_cols[(i, int(k))]] += 1.0
            if instance.tails[k] == v:
                M[row, x_cols[(i, int(k))]] -= 1.0
        com = instance.commodities[i]
        if v == instance.vertex_index[com.target]:
            rhs[row] = com.demand / scale
        row += 1

    def attempt(a):
        full = M.copy()
        for rr, cc, k in slope_entries:
            full[rr, cc] -= a[k] * scale
        sol, _, rank, _ = np.linalg.lstsq(full, rhs, rcond=None)
        return full, sol, rank < size

    A, sol, deficient = attempt(slope)
    if deficient and np.any(slope[mask.any(axis=0)] <= 0):
        A, sol, deficient = attempt(regularized_slopes(slope, eps_slope))
    if deficient:
        if r == 1:
            raise SingularSystem("support system is singular")
        if np.max(np.abs(A @ sol - rhs)) > 1e-8 * max(1.0, float(np.max(np.abs(rhs)))):
            raise SingularSystem("support system is inconsistent")

    flow = np.zeros((r, m))
    for (i, k), col in x_cols.items():
        flow[i, k] = sol[col] * scale
    pots = np.full((r, n), np.nan)
    for i, com in enumerate(instance.commodities):
        pots[i, instance.vertex_index[com.source]] = 0.0
    for (i, v), col in p_cols.items():
        pots[i, v] = sol[col]
    if deficient:
        flow = _resplit(instance, mask, flow)
    if np.any(full_mask != mask):
        _extend_potentials(instance, pots, full_mask, slope * flow.sum(axis=0) + offset)

    cost = float(sum(com.demand * pots[i, instance.vertex_index[com.target]]
                     for i, com in enumerate(instance.commodities)))
    result = SupportSolution(flow, pots, cost, rank_deficient=deficient)
    _report_violations(instance, mu, full_mask, result, tol)
    return result


def _resplit(instance: Instance, mask: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Non-negative per-commodity split of fixed aggregate loads, when one exists."""
    if np.all(flow >= -1e-12 * instance.demands.max()):
        return flow
    from .lp import RowBuilder, solve_lp

    loads = flow.sum(axis=0)
    cols = {(i, int(k)): c for c, (i, k) in enumerate(zip(*np.nonzero(mask)))}
    rb = RowBuilder(len(cols))
    for k in range(len(instance.edges)):
        coeffs = {c: 1.0 for (i, kk), c in cols.items() if kk == k}
        if coeffs:
            rb.add(coeffs, loads[k])
    for i, com in enumerate(instance.commodities):
        for v in range(len(instance.vertices)):
            coeffs: dict[int, float] = {}
            for (j, k), c in cols.items():
                if j != i:
                    continue
                if instance.tails[k] == v:
                    coeffs[c] = coeffs.get(c, 0.0) + 1.0
                if instance.heads[k] == v:
                    coeffs[c] = coeffs.get(c, 0.0) - 1.0
            b = com.demand if v == instance.vertex_index[com.source] else (
                -com.demand if v == instance.vertex_index[com.target] else 0.0)
            if coeffs or b:
                rb.add(coeffs, b)
    A, b = rb.matrix()
    res = solve_lp(np.zeros(len(cols)), A_eq=A, b_eq=b, bounds=[(0, None)] * len(cols))
    if res.status != "optimal":
        return flow
    out = np.zeros_like(flow)
    for (i, k), c in cols.items():
        out[i, k] = res.x[c]
    return out


def _report_violations(instance: Instance, mu: Belief, mask: np.ndarray, result: SupportSolution, tol: float):
    ids = [e.id for e in instance.edges]
    demands = instance.demands
    for i, k in zip(*np.nonzero(mask & (result.flow < -tol * demands[:, None]))):
        result.negative_flows.append((int(i), ids[k], float(result.flow[i, k])))
    # negative loads are reported above; clip them so Dijkstra sees costs >= 0
    costs = edge_costs(instance, mu, np.maximum(result.loads, 0.0))
    dist = shortest_distances(instance, costs)
    for i in range(len(instance.commodities)):
        pot = result.potentials[i]
        on = ~np.isnan(pot)
        scale = tol * (1.0 + float(np.max(np.abs(pot[on]))))
        # a support vertex is undercut when some path reaches it cheaper
        label = np.where(on, np.minimum(np.where(on, pot, 0.0), dist[i]), dist[i])
        undercut = on & (dist[i] < np.where(on, pot, 0.0) - scale)
        for k in np.flatnonzero(instance.route_masks[i] & ~mask[i]):
            u, w = instance.tails[k], instance.heads[k]
            if not on[w] or not math.isfinite(label[u]):
                continue
            slack = pot[w] - (label[u] + costs[k])
            if slack > scale or (undercut[w] and slack >= -scale):
                result.cost_violations.append((i, ids[k], float(slack)))


# -- solvers -------------------------------------------------------------------------


def extract_support(instance: Instance, belief, flow: np.ndarray, support_eps: float = 1e-7,
                    flow_tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Active edges per commodity: tight under shortest-path potentials, or carrying flow."""
    mu = _as_belief(instance, belief)
    costs = edge_costs(instance, mu, flow.sum(axis=0))
    dist = shortest_distances(instance, costs)
    mask = np.zeros_like(flow, dtype=bool)
    for i in range(len(instance.commodities)):
        du, dv = dist[i, instance.tails], dist[i, instance.heads]
        ok = instance.route_masks[i] & np.isfinite(du) & np.isfinite(dv)
        gap = np.full(len(costs), math.inf)
        gap[ok] = np.abs(dv[ok] - du[ok] - costs[ok])
        tight = ok & (gap <= support_eps * (1.0 + np.abs(np.where(np.isfinite(dv), dv, 0.0))))
        mask[i] = tight | (flow[i] > flow_tol * instance.commodities[i].demand)
    return mask, dist


def _refine(instance: Instance, mu: Belief, mask: np.ndarray, eps_slope: float, rounds: int = 30):
    """Active-set repair around :func:`solve_on_support`; None when it fails."""
    demands = instance.demands
    seen: set[bytes] = set()
    for _ in range(rounds):
        key = mask.tobytes()
        if key in seen:
            return None
        seen.add(key)
        try:
            sol = solve_on_support(instance, mu, mask, eps_slope=eps_slope)
        except SingularSystem:
            return None
        x = sol.flow
        neg = mask & (x < -1e-10 * demands[:, None])
        if neg.any():
            new = mask & ~neg
            for i in range(len(instance.commodities)):
                try:
                    _component_check(instance, i, new[i])
                except SingularSystem:
                    row = mask[i].copy()
                    worst = int(np.argmin(np.where(neg[i], x[i], math.inf)))
                    row[worst] = False
                    new[i] = row
            mask = new
            continue
        x = np.where(mask, np.maximum(x, 0.0), 0.0)
        costs = edge_costs(instance, mu, x.sum(axis=0))
        dist = shortest_distances(instance, costs)
        bad = False
        grow = mask.copy()
        for i, com in enumerate(instance.commodities):
            du, dv = dist[i, instance.tails], dist[i, instance.heads]
            ok = instance.route_masks[i] & np.isfinite(du) & np.isfinite(dv)
            red = np.full(len(costs), math.inf)
            red[ok] = costs[ok] + du[ok] - dv[ok]
            scale = 1e-9 * (1.0 + abs(dist[i, instance.vertex_index[com.target]]))
            if np.any((x[i] > 1e-12 * com.demand) & (red > scale)):
                bad = True
            grow[i] |= red <= scale
        if not bad:
            return x
        if np.array_equal(grow, mask):
            return None
        mask = grow
    return None


def _result_from_flow(instance: Instance, mu: Belief, x: np.ndarray, support_eps: float,
                      iterations: int, method: str) -> EquilibriumResult:
    mask, dist = extract_support(instance, mu, x, support_eps, flow_tol=1e-12)
    costs = edge_costs(instance, mu, x.sum(axis=0))
    cost = float(np.dot(x.sum(axis=0), costs))
    lower = float(sum(com.demand * dist[i, instance.vertex_index[com.target]]
                      for i, com in enumerate(instance.commodities)))
    rel = (cost - lower) / (abs(cost) + 1e-12 * float(instance.demands.sum()))
    report = verify_wardrop(instance, mu, x)
    return EquilibriumResult(x, dist, mask_to_support(instance, mask), cost, report.residual,
                             max(rel, 0.0), iterations, method)


def solve_wardrop(instance: Instance, belief, fw_gap_tol: float = 1e-9, max_iters: int = 20000,
                  support_eps: float = 1e-7, eps_slope: float = EPS_SLOPE,
                  refine: bool = True) -> EquilibriumResult:
    """Wardrop equilibrium at ``belief`` via Frank-Wolfe plus exact support refinement."""
    mu = _as_belief(instance, belief)
    if not instance.commodities:
        r, m, n = 0, len(instance.edges), len(instance.vertices)
        return EquilibriumResult(np.zeros((0, m)), np.zeros((0, n)), (), 0.0, 0.0)
    slope, offset = instance.expected_params(mu)
    x, _ = _all_or_nothing(instance, offset.copy())
    next_refine = 1e-2
    rel = math.inf
    # keeps the relative gap meaningful when every used path costs (almost) nothing
    floor = 1e-12 * float(instance.demands.sum())
    for it in range(1, max_iters + 1):
        load = x.sum(axis=0)
        costs = slope * load + offset
        y, dists = _all_or_nothing(instance, costs)
        total = float(costs @ load)
        lower = float(sum(com.demand * dists[i, instance.vertex_index[com.target]]
                          for i, com in enumerate(instance.commodities)))
        gap = total - lower
        rel = gap / (total + floor)
        if refine and (rel <= next_refine or rel <= fw_gap_tol):
            next_refine = max(rel, 1e-16) / 10.0
            mask, _ = extract_support(instance, mu, x, support_eps, flow_tol=1e-9)
            exact = _refine(instance, mu, mask, eps_slope)
            if exact is not None:
                return _result_from_flow(instance, mu, exact, support_eps, it, "frank-wolfe+support")
        if rel <= fw_gap_tol:
            return _result_from_flow(instance, mu, x, support_eps, it, "frank-wolfe")
        d = y - x
        dl = d.sum(axis=0)
        den = float(np.sum(slope * dl * dl))
        step = 1.0 if den <= 0 else min(1.0, max(0.0, gap / den))
        if step == 0.0:
            return _result_from_flow(instance, mu, x, support_eps, it, "frank-wolfe")
        x = x + step * d
    best = _result_from_flow(instance, mu, x, support_eps, max_iters, "frank-wolfe")
    raise NonConvergence(f"relative gap {rel:.3e} after {max_iters} iterations", best)


def parallel_links_wardrop(instance: Instance, belief, support_eps: float = 1e-12) -> EquilibriumResult:
    """Closed-form water-filling on single-commodity parallel links.

    Links enter in increasing offset order while the common cost level
    exceeds the next offset.  A constant-cost link caps the level at its
    offset and absorbs the remaining demand (split evenly among constant
    links with the same offset).
    """
    if not instance.parallel_links or len(instance.commodities) != 1:
        raise NotParallelLinks("water-filling needs one commodity on parallel links")
    mu = _as_belief(instance, belief)
    com = instance.commodities[0]
    if (instance.edges[0].tail, instance.edges[0].head) != (com.source, com.target):
        raise NotParallelLinks("commodity does not run along the parallel links")
    allowed = instance.allowed_masks[0]
    slope, offset = instance.expected_params(mu)
    level, flows = water_fill(slope[allowed], offset[allowed], com.demand)
    m = len(instance.edges)
    x = np.zeros((1, m))
    x[0, np.flatnonzero(allowed)] = flows
    n = len(instance.vertices)
    pots = np.full((1, n), math.inf)
    pots[0, instance.vertex_index[com.source]] = 0.0
    pots[0, instance.vertex_index[com.target]] = level
    active = allowed & (offset <= level + support_eps * (1.0 + abs(level)))
    active |= x[0] > 0
    cost = com.demand * level
    report = verify_wardrop(instance, mu, x)
    return EquilibriumResult(x, pots, mask_to_support(instance, active[None, :]), cost,
                             report.residual, 0.0, 0, "water-filling")


def water_fill(slope: np.ndarray, offset: np.ndarray, demand: float) -> tuple[float, np.ndarray]:
    """Common cost level and link flows for parallel affine links."""
    slope = np.asarray(slope, dtype=float)
    offset = np.asarray(offset, dtype=float)
    m = len(slope)
    flows = np.zeros(m)
    if demand <= 0:
        return float(offset.min(initial=0.0)), flows
    const = slope <= 0
    cap = float(offset[const].min()) if const.any() else math.inf
    order = [k for k in np.lexsort((np.arange(m), offset)) if not const[k]]
    inv_sum = 0.0
    weighted = 0.0
    level = math.inf
    for pos, k in enumerate(order):
        inv_sum += 1.0 / slope[k]
        weighted += offset[k] / slope[k]
        cand = (demand + weighted) / inv_sum
        nxt = offset[order[pos + 1]] if pos + 1 < len(order) else math.inf
        if cand <= nxt:
            level = cand
            break
    if level >= cap:
        level = cap
        for k in order:
            if offset[k] < cap:
                flows[k] = (cap - offset[k]) / slope[k]
        rest = demand - flows.sum()
        ties = np.flatnonzero(const & (offset == cap))
        flows[ties] = rest / len(ties)
        return level, flows
    for k in order:
        if offset[k] < level:
            flows[k] = (level - offset[k]) / slope[k]
    return float(level), flows
