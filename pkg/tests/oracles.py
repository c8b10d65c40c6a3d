"""Reference computations that share no code with the package solvers.

They are slow and only suitable for tiny instances.
"""

import functools
import itertools

import numpy as np
from scipy.optimize import brentq, minimize

from congestion_signaling.model import Commodity, Edge, Instance, StateSpace


def simple_paths(instance, source, target, allowed=None):
    out = []
    adj = {}
    for k, e in enumerate(instance.edges):
        if allowed is None or e.id in allowed:
            adj.setdefault(e.tail, []).append((k, e.head))

    def walk(u, seen, path):
        if u == target:
            out.append(list(path))
            return
        for k, w in adj.get(u, ()):
            if w not in seen:
                walk(w, seen | {w}, path + [k])

    walk(source, {source}, [])
    return out


def beckmann_loads(instance, belief):
    """Minimize the Beckmann potential over path flows with SLSQP."""
    mu = np.asarray(belief, dtype=float)
    a = np.array([np.dot(e.slope, mu) for e in instance.edges])
    b = np.array([np.dot(e.offset, mu) for e in instance.edges])
    m = len(instance.edges)
    cols, owner = [], []
    for i, com in enumerate(instance.commodities):
        for p in simple_paths(instance, com.source, com.target, com.allowed_edges):
            col = np.zeros(m)
            col[p] = 1.0
            cols.append(col)
            owner.append(i)
    P = np.array(cols).T
    owner = np.array(owner)
    demand = np.array([c.demand for c in instance.commodities])

    def potential(h):
        x = P @ h
        return float(np.sum(0.5 * a * x * x + b * x))

    def grad(h):
        return P.T @ (a * (P @ h) + b)

    h0 = np.concatenate([np.full(np.sum(owner == i), d / np.sum(owner == i)) for i, d in enumerate(demand)])
    cons = [{"type": "eq", "fun": (lambda h, i=i: np.sum(h[owner == i]) - demand[i]),
             "jac": (lambda h, i=i: (owner == i).astype(float))} for i in range(len(demand))]
    res = minimize(potential, h0, jac=grad, bounds=[(0, None)] * len(h0), constraints=cons,
                   method="SLSQP", options={"ftol": 1e-15, "maxiter": 2000})
    return P @ res.x, res.fun


def parallel_level(slopes, offsets, demand):
    """Common cost level of a parallel-link equilibrium by root finding."""
    slopes = np.asarray(slopes, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    pos = slopes > 0
    cap = offsets[~pos].min() if np.any(~pos) else np.inf

    def excess(level):
        return np.sum(np.maximum(level - offsets[pos], 0.0) / slopes[pos]) - demand

    if not np.any(pos):
        return cap
    hi = offsets.max() + demand * slopes[pos].max() + 1.0
    if cap < hi:
        if excess(cap) <= 0:
            return cap
        hi = cap
    return brentq(excess, offsets.min() - 1.0, hi, xtol=1e-14)


def parallel_cost(slopes, offsets, demand):
    return demand * parallel_level(slopes, offsets, demand)


def two_point_envelope(curve, prior_alpha, n=4001):
    """Best split of ``prior_alpha`` into two beliefs on a uniform grid."""
    xs = np.linspace(0.0, 1.0, n)
    ys = np.array([curve(x) for x in xs])
    best = float(curve(prior_alpha))
    left = xs <= prior_alpha
    for i in np.flatnonzero(left):
        for j in np.flatnonzero(~left):
            w = (xs[j] - prior_alpha) / (xs[j] - xs[i])
            best = min(best, w * ys[i] + (1 - w) * ys[j])
    return best


def parallel_instance(slopes, offsets1, offsets2, demand=1.0, prior=(0.5, 0.5)):
    edges = tuple(Edge(f"e{k + 1}", "s", "t", (float(a), float(a)), (float(b1), float(b2)))
                  for k, (a, b1, b2) in enumerate(zip(slopes, offsets1, offsets2)))
    return Instance(("s", "t"), edges, (Commodity("s", "t", float(demand)),),
                    StateSpace(("theta1", "theta2"), tuple(prior)))


def small_dags(max_vertices=5, max_edges=6, multi=False):
    """Every DAG on ``s < u0 < ... < t`` with at most ``max_edges`` edges."""
    for n in range(2, max_vertices + 1):
        verts = ["s"] + [f"u{i}" for i in range(n - 2)] + ["t"]
        pairs = [(verts[i], verts[j]) for i in range(n) for j in range(i + 1, n)]
        pick = itertools.combinations_with_replacement if multi else itertools.combinations
        for m in range(1, max_edges + 1):
            for sub in pick(pairs, m):
                yield [(f"e{k}", u, v) for k, (u, v) in enumerate(sub)]


def _st_pruned(edges, s, t):
    fwd, bwd = {}, {}
    for _, u, v in edges:
        fwd.setdefault(u, set()).add(v)
        bwd.setdefault(v, set()).add(u)

    def reach(x, adj):
        seen, todo = {x}, [x]
        while todo:
            for w in adj.get(todo.pop(), ()):
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return seen

    a, b = reach(s, fwd), reach(t, bwd)
    return [e for e in edges if e[1] in a and e[2] in b and e[1] != t and e[2] != s]


def sp_by_definition(edges, s, t) -> bool:
    """Series-parallel test straight from the recursive definition, by trying every edge split."""
    edges = _st_pruned(list(edges), s, t)

    @functools.lru_cache(maxsize=None)
    def sp(es: frozenset, a, b) -> bool:
        if len(es) == 1:
            (_, u, v), = es
            return (u, v) == (a, b)
        items = sorted(es)
        verts = {x for _, u, v in items for x in (u, v)}
        for r in range(1, len(items)):
            for part in itertools.combinations(items[1:], r - 1):
                left = frozenset((items[0],) + part)
                right = es - left
                vl = {x for _, u, v in left for x in (u, v)}
                vr = {x for _, u, v in right for x in (u, v)}
                shared = vl & vr
                if shared == {a, b} and sp(left, a, b) and sp(right, a, b):
                    return True
                if len(shared) == 1:
                    (m,) = shared
                    if m in (a, b):
                        continue
                    for x, y in ((left, right), (right, left)):
                        vx = {w for _, u, v in x for w in (u, v)}
                        if a in vx and b not in vx and sp(x, a, m) and sp(y, m, b):
                            return True
        return False

    return bool(edges) and sp(frozenset(edges), s, t)
