"""Series-parallel recognition and Braess witnesses for two-terminal networks.

Recognition repeatedly merges parallel edges and contracts vertices with
one incoming and one outgoing edge.  A network that does not collapse to a
single ``s -> t`` edge contains an embedded Wheatstone bridge, which
:func:`braess_witness` turns into a two-state game where revealing the
state is strictly worse than staying silent.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .model import Commodity, Edge, Instance, ModelError, StateSpace

INFINITE_OFFSET = 1e6


class BadTerminals(ModelError):
    pass


class GraphIsSeriesParallel(ModelError):
    pass


@dataclass
class SpNode:
    kind: str  # "edge" | "series" | "parallel"
    tail: str
    head: str
    children: list["SpNode"] = field(default_factory=list)
    edge: str | None = None

    def leaves(self) -> list[str]:
        if self.kind == "edge":
            return [self.edge]
        return [e for c in self.children for e in c.leaves()]

    def glued(self) -> "SpNode":
        """Flatten nested nodes of the same kind into one n-ary node."""
        if self.kind == "edge":
            return self
        kids = []
        for c in self.children:
            g = c.glued()
            kids.extend(g.children if g.kind == self.kind else [g])
        return SpNode(self.kind, self.tail, self.head, kids)

    def to_dict(self) -> dict:
        if self.kind == "edge":
            return {"edge": self.edge, "tail": self.tail, "head": self.head}
        return {self.kind: [c.to_dict() for c in self.children], "tail": self.tail, "head": self.head}


@dataclass
class NotSp:
    kernel: list[tuple[str, str]]  # irreducible remainder as (tail, head) pairs
    pruned: list[str]

    def __bool__(self):
        return False


@dataclass
class SpResult:
    tree: SpNode
    pruned: list[str]

    def __bool__(self):
        return True


Network = list[tuple[str, str, str]]  # (edge id, tail, head)


def network_of(instance: Instance) -> Network:
    return [(e.id, e.tail, e.head) for e in instance.edges]


def prune_to_st_paths(network: Network, s: str, t: str) -> tuple[Network, list[str]]:
    """Keep edges ``(u, v)`` with ``u`` reachable from ``s`` and ``t`` reachable from ``v``."""
    fwd: dict[str, list[str]] = {}
    bwd: dict[str, list[str]] = {}
    for _, u, v in network:
        fwd.setdefault(u, []).append(v)
        bwd.setdefault(v, []).append(u)

    def closure(start, adj):
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for w in adj.get(u, ()):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    from_s, to_t = closure(s, fwd), closure(t, bwd)
    if t not in from_s:
        raise BadTerminals(f"{t} is not reachable from {s}")
    kept = [(k, u, v) for k, u, v in network if u in from_s and v in to_t and u != t and v != s]
    pruned = [k for k, u, v in network if (k, u, v) not in kept]
    return kept, pruned


def is_series_parallel(network, s: str, t: str) -> SpResult | NotSp:
    """Decompose ``network`` (edge list or Instance) by series/parallel reductions."""
    if isinstance(network, Instance):
        network = network_of(network)
    edges, pruned = prune_to_st_paths(list(network), s, t)
    live: dict[int, SpNode] = {i: SpNode("edge", u, v, edge=k) for i, (k, u, v) in enumerate(edges)}
    counter = itertools.count(len(live))
    changed = True
    while changed:
        changed = False
        by_pair: dict[tuple[str, str], list[int]] = {}
        for i, node in live.items():
            by_pair.setdefault((node.tail, node.head), []).append(i)
        for (u, v), ids in by_pair.items():
            if len(ids) > 1:
                a, b = ids[0], ids[1]
                merged = SpNode("parallel", u, v, [live.pop(a), live.pop(b)])
                live[next(counter)] = merged
                changed = True
                break
        if changed:
            continue
        ins: dict[str, list[int]] = {}
        outs: dict[str, list[int]] = {}
        for i, node in live.items():
            outs.setdefault(node.tail, []).append(i)
            ins.setdefault(node.head, []).append(i)
        for v in sorted(set(ins) | set(outs)):
            if v in (s, t):
                continue
            if len(ins.get(v, ())) == 1 and len(outs.get(v, ())) == 1:
                a, b = ins[v][0], outs[v][0]
                if a == b:
                    continue
                first, second = live.pop(a), live.pop(b)
                live[next(counter)] = SpNode("series", first.tail, second.head, [first, second])
                changed = True
                break
    nodes = list(live.values())
    if len(nodes) == 1 and (nodes[0].tail, nodes[0].head) == (s, t):
        return SpResult(nodes[0], pruned)
    return NotSp(sorted((n.tail, n.head) for n in nodes), pruned)


# -- Wheatstone embeddings ----------------------------------------------------------------


@dataclass
class Wheatstone:
    a: str
    b: str
    paths: dict  # name -> edge ids; sa, sb, at, bt, ab and optionally pre, post


def _simple_paths(adj, src, dst, banned: frozenset) -> list[tuple[list[str], list[str]]]:
    """All simple ``src -> dst`` paths avoiding ``banned`` internal vertices: (vertices, edges)."""
    out = []

    def walk(u, verts, edges):
        if u == dst:
            out.append((list(verts), list(edges)))
            return
        for k, w in adj.get(u, ()):
            if w in verts or (w in banned and w != dst):
                continue
            verts.append(w)
            edges.append(k)
            walk(w, verts, edges)
            verts.pop()
            edges.pop()

    walk(src, [src], [])
    return out


def find_wheatstone(network, s: str, t: str) -> Wheatstone | None:
    """Search for a Wheatstone bridge embedded between ``s`` and ``t``.

    The bridge has terminals ``s2, t2`` and inner vertices ``a, b`` joined by
    five internally disjoint paths ``s2-a, s2-b, a-t2, b-t2, a-b``; its
    terminals are connected to ``s`` and ``t`` by two more disjoint paths,
    which may be empty.
    """
    if isinstance(network, Instance):
        network = network_of(network)
    edges, _ = prune_to_st_paths(list(network), s, t)
    adj: dict[str, list[tuple[str, str]]] = {}
    verts = set()
    for k, u, v in edges:
        adj.setdefault(u, []).append((k, v))
        verts |= {u, v}
    inner = sorted(verts - {s, t})
    for a, b in itertools.permutations(inner, 2):
        for s2 in [s] + inner:
            for t2 in [t] + inner:
                if len({s2, t2, a, b}) < 4:
                    continue
                found = _embed(adj, (s, s2, t2, t), a, b)
                if found is not None:
                    return Wheatstone(a, b, found)
    return None


def _embed(adj, terminals, a, b):
    s, s2, t2, t = terminals
    ends = {s, s2, t2, t, a, b}
    order = [("ab", a, b), ("sa", s2, a), ("sb", s2, b), ("at", a, t2), ("bt", b, t2)]
    order += [(name, u, v) for name, u, v in (("pre", s, s2), ("post", t2, t)) if u != v]

    def rec(idx, used_inner: frozenset, used_edges: frozenset, chosen):
        if idx == len(order):
            return dict(chosen)
        name, src, dst = order[idx]
        for vs, es in _simple_paths(adj, src, dst, used_inner | (ends - {src, dst})):
            inner = frozenset(vs[1:-1])
            if inner & used_inner or inner & ends or used_edges & set(es):
                continue
            chosen.append((name, es))
            got = rec(idx + 1, used_inner | inner, used_edges | frozenset(es), chosen)
            if got is not None:
                return got
            chosen.pop()
        return None

    return rec(0, frozenset(), frozenset(), [])


def has_wheatstone(network, s: str, t: str) -> bool:
    return find_wheatstone(network, s, t) is not None


# -- guarantee and witness -------------------------------------------------------------------------


@dataclass
class Guarantee:
    guaranteed: bool
    reasons: list[str]


def full_revelation_guarantee(instance: Instance) -> Guarantee:
    """Is revealing the state optimal for every prior and every cost choice of this class?"""
    reasons = []
    if len(instance.commodities) != 1:
        reasons.append("multiple commodities")
    if not instance.offsets_only:
        reasons.append("slopes depend on the state")
    if instance.commodities:
        com = instance.commodities[0]
        mask = instance.allowed_masks[0]
        net = [(e.id, e.tail, e.head) for k, e in enumerate(instance.edges) if mask[k]]
        if not is_series_parallel(net, com.source, com.target):
            reasons.append("not series-parallel")
    return Guarantee(not reasons, reasons)


def braess_witness(network, s: str, t: str, demand: float = 1.0) -> Instance:
    """Two-state costs on ``network`` reproducing the Braess gap along an embedded bridge.

    On the five bridge paths only the first edge is priced: ``x`` on ``s-a``
    and ``b-t``, the constant 1 on ``s-b`` and ``a-t``, and on ``a-b`` an
    offset that is 0 in the first state and 1 in the second.  Other path
    edges and the paths joining the bridge to ``s`` and ``t`` cost nothing;
    edges off the bridge get a prohibitive constant.
    """
    if isinstance(network, Instance):
        network = network_of(network)
    network = list(network)
    w = find_wheatstone(network, s, t)
    if w is None:
        raise GraphIsSeriesParallel("no embedded Wheatstone bridge: the network is series-parallel")
    first = {}
    on_path = set()
    for name, es in w.paths.items():
        if name not in ("pre", "post"):
            first[es[0]] = name
        on_path.update(es)
    verts: list[str] = []
    edges = []
    for k, u, v in network:
        for x in (u, v):
            if x not in verts:
                verts.append(x)
        role = first.get(k)
        if role in ("sa", "bt"):
            slope, off = (1.0, 1.0), (0.0, 0.0)
        elif role in ("sb", "at"):
            slope, off = (0.0, 0.0), (1.0, 1.0)
        elif role == "ab":
            slope, off = (0.0, 0.0), (0.0, 1.0)
        elif k in on_path:
            slope, off = (0.0, 0.0), (0.0, 0.0)
        else:
            slope, off = (0.0, 0.0), (INFINITE_OFFSET, INFINITE_OFFSET)
        edges.append(Edge(k, u, v, slope, off))
    return Instance(tuple(verts), tuple(edges), (Commodity(s, t, demand),),
                    StateSpace(("theta1", "theta2"), (0.5, 0.5)), name="braess_witness")


def random_sp_network(rng, n_edges: int, s: str = "s", t: str = "t") -> Network:
    """Random two-terminal series-parallel network built by random compositions."""
    counter = itertools.count()
    fresh = itertools.count()

    def build(k, u, v):
        if k == 1:
            return [(f"e{next(counter)}", u, v)]
        left = int(rng.integers(1, k))
        if rng.random() < 0.5:
            mid = f"w{next(fresh)}"
            return build(left, u, mid) + build(k - left, mid, v)
        return build(left, u, v) + build(k - left, u, v)

    return build(n_edges, s, t)

