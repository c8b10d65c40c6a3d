"""Domain types for Bayesian network congestion games with affine costs.

An :class:`Instance` is a directed multigraph whose edges carry one affine
cost ``slope * x + offset`` per state of nature, a list of commodities and a
prior over the states.  Everything here is immutable; the numerical helpers
return fresh numpy arrays.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

PROB_TOL = 1e-9
SLOPE_EQ_TOL = 1e-12


class ModelError(ValueError):
    """Base class for malformed game data."""


class NotADistribution(ModelError):
    pass


class ParseError(ModelError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingField(ParseError):
    pass


@dataclass(frozen=True)
class StateSpace:
    states: tuple[str, ...]
    prior: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(self, "prior", tuple(float(p) for p in self.prior))
        if not self.states:
            raise ModelError("at least one state is required")
        if len(set(self.states)) != len(self.states):
            raise ModelError("state identifiers must be unique")
        if len(self.prior) != len(self.states):
            raise ModelError("prior length differs from number of states")
        _check_distribution(self.prior, tol=1e-12)

    @property
    def size(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str
    head: str
    slope: tuple[float, ...]
    offset: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "slope", tuple(float(a) for a in self.slope))
        object.__setattr__(self, "offset", tuple(float(b) for b in self.offset))
        if len(self.slope) != len(self.offset):
            raise ModelError(f"edge {self.id}: slope and offset lengths differ")


@dataclass(frozen=True)
class Commodity:
    source: str
    target: str
    demand: float
    allowed_edges: frozenset[str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "demand", float(self.demand))
        if self.allowed_edges is not None:
            object.__setattr__(self, "allowed_edges", frozenset(self.allowed_edges))


@dataclass(frozen=True)
class Belief:
    """A distribution over the states, in the state-space order."""

    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)

    def __len__(self):
        return len(self.weights)

    @property
    def alpha(self) -> float:
        """Probability of the first state (the two-state parameterization)."""
        return self.weights[0]


def _check_distribution(weights: Sequence[float], tol: float = PROB_TOL) -> None:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise NotADistribution("weights must be a non-empty vector")
    if not np.all(np.isfinite(w)):
        raise NotADistribution("weights must be finite")
    if np.any(w < 0):
        raise NotADistribution(f"negative weight in {list(w)}")
    if abs(w.sum() - 1.0) > tol:
        raise NotADistribution(f"weights sum to {w.sum()!r}, not 1")


def make_belief(weights: Iterable[float], n_states: int | None = None) -> Belief:
    """Validate ``weights`` as a distribution; never renormalizes."""
    w = tuple(float(x) for x in weights)
    if n_states is not None and len(w) != n_states:
        raise NotADistribution(f"expected {n_states} weights, got {len(w)}")
    _check_distribution(w)
    return Belief(w)


def alpha_belief(alpha: float) -> Belief:
    """Two-state belief with ``alpha`` mass on the first state."""
    alpha = min(1.0, max(0.0, float(alpha)))
    return Belief((alpha, 1.0 - alpha))


def expected_cost_params(edge: Edge, belief: Belief | Sequence[float]) -> tuple[float, float]:
    """Return ``(slope, offset)`` of the belief-averaged cost of ``edge``."""
    mu = np.asarray(belief, dtype=float)
    return float(mu @ np.asarray(edge.slope)), float(mu @ np.asarray(edge.offset))


@dataclass(frozen=True)
class Instance:
    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    commodities: tuple[Commodity, ...]
    state_space: StateSpace
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(str(v) for v in self.vertices))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "commodities", tuple(self.commodities))
        for e in self.edges:
            if len(e.slope) != self.state_space.size:
                raise ModelError(f"edge {e.id}: expected {self.state_space.size} per-state parameters")
        ids = [e.id for e in self.edges]
        if len(set(ids)) != len(ids):
            raise ModelError("edge ids must be unique")

    # -- indexing -----------------------------------------------------------------

    @cached_property
    def vertex_index(self) -> dict[str, int]:
        return {v: k for k, v in enumerate(self.vertices)}

    @cached_property
    def edge_index(self) -> dict[str, int]:
        return {e.id: k for k, e in enumerate(self.edges)}

    @cached_property
    def tails(self) -> np.ndarray:
        return np.array([self.vertex_index[e.tail] for e in self.edges], dtype=int)

    @cached_property
    def heads(self) -> np.ndarray:
        return np.array([self.vertex_index[e.head] for e in self.edges], dtype=int)

    @cached_property
    def slopes(self) -> np.ndarray:
        """Per-state slopes, shape ``(m, d)``."""
        return np.array([e.slope for e in self.edges], dtype=float).reshape(len(self.edges), self.n_states)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Per-state offsets, shape ``(m, d)``."""
        return np.array([e.offset for e in self.edges], dtype=float).reshape(len(self.edges), self.n_states)

    @cached_property
    def allowed_masks(self) -> np.ndarray:
        """Boolean ``(r, m)`` matrix of edges each commodity may use."""
        mask = np.ones((len(self.commodities), len(self.edges)), dtype=bool)
        for i, com in enumerate(self.commodities):
            if com.allowed_edges is not None:
                mask[i] = [e.id in com.allowed_edges for e in self.edges]
        return mask

    @cached_property
    def route_masks(self) -> np.ndarray:
        """Allowed edges that lie on some source-to-target walk of each commodity."""
        mask = self.allowed_masks.copy()
        for i, com in enumerate(self.commodities):
            fwd: dict[str, list[str]] = {}
            bwd: dict[str, list[str]] = {}
            for k, e in enumerate(self.edges):
                if mask[i, k]:
                    fwd.setdefault(e.tail, []).append(e.head)
                    bwd.setdefault(e.head, []).append(e.tail)
            from_s, to_t = _closure(com.source, fwd), _closure(com.target, bwd)
            mask[i] &= [e.tail in from_s and e.head in to_t for e in self.edges]
        return mask

    @cached_property
    def adjacency(self) -> tuple[list[list[tuple[int, int]]], ...]:
        """Per commodity, ``out[v] = [(edge_index, head_index), ...]`` in edge order."""
        n = len(self.vertices)
        result = []
        for mask in self.allowed_masks:
            out: list[list[tuple[int, int]]] = [[] for _ in range(n)]
            for k in np.flatnonzero(mask):
                out[self.tails[k]].append((int(k), int(self.heads[k])))
            result.append(out)
        return tuple(result)

    @cached_property
    def reverse_adjacency(self) -> tuple[list[list[tuple[int, int]]], ...]:
        n = len(self.vertices)
        result = []
        for mask in self.allowed_masks:
            inc: list[list[tuple[int, int]]] = [[] for _ in range(n)]
            for k in np.flatnonzero(mask):
                inc[self.heads[k]].append((int(k), int(self.tails[k])))
            result.append(inc)
        return tuple(result)

    @property
    def n_states(self) -> int:
        return self.state_space.size

    @property
    def prior(self) -> Belief:
        return Belief(self.state_space.prior)

    @property
    def demands(self) -> np.ndarray:
        return np.array([c.demand for c in self.commodities], dtype=float)

    # -- derived flags ------------------------------------------------------------

    @cached_property
    def offsets_only(self) -> bool:
        """True iff every edge has the same slope in every state."""
        s = self.slopes
        return bool(np.all(np.abs(s - s[:, :1]) <= SLOPE_EQ_TOL))

    @cached_property
    def parallel_links(self) -> bool:
        """True iff all edges join one common (tail, head) pair."""
        if not self.edges:
            return False
        pairs = {(e.tail, e.head) for e in self.edges}
        return len(pairs) == 1

    def expected_params(self, belief: Belief | Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :func:`expected_cost_params` over all edges."""
        mu = np.asarray(belief, dtype=float)
        if mu.shape != (self.n_states,):
            raise NotADistribution(f"belief has {mu.size} entries, instance has {self.n_states} states")
        return self.slopes @ mu, self.offsets @ mu

    def with_commodities(self, commodities: Sequence[Commodity]) -> "Instance":
        return Instance(self.vertices, self.edges, tuple(commodities), self.state_space, self.name)

    def with_prior(self, prior: Sequence[float]) -> "Instance":
        return Instance(self.vertices, self.edges, self.commodities,
                        StateSpace(self.state_space.states, tuple(prior)), self.name)


# -- validation --------------------------------------------------------------------


@dataclass
class ValidationReport:
    violations: list[str]
    offsets_only: bool
    parallel_links: bool
    zero_slope_edges: list[str]

    @property
    def valid(self) -> bool:
        return not self.violations


def _closure(source: str, adj: dict[str, list[str]]) -> set[str]:
    seen = {source}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in adj.get(u, ()):
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen


def reachable(instance: Instance, source: str, mask: np.ndarray | None = None) -> set[str]:
    """Vertices reachable from ``source`` over edges selected by ``mask``."""
    adj: dict[str, list[str]] = {v: [] for v in instance.vertices}
    for k, e in enumerate(instance.edges):
        if mask is None or mask[k]:
            adj.setdefault(e.tail, []).append(e.head)
    return _closure(source, adj)


def validate_instance(instance: Instance) -> ValidationReport:
    """Collect every problem with ``instance`` instead of raising on the first."""
    problems: list[str] = []
    verts = set(instance.vertices)
    for e in instance.edges:
        if e.tail == e.head:
            problems.append(f"self-loop on edge {e.id}")
        for end in (e.tail, e.head):
            if end not in verts:
                problems.append(f"edge {e.id} references unknown vertex {end}")
        params = e.slope + e.offset
        if not all(math.isfinite(p) for p in params):
            problems.append(f"non-finite cost parameter on edge {e.id}")
        elif any(a < 0 for a in e.slope):
            problems.append(f"negative slope on edge {e.id}")
        elif any(b < 0 for b in e.offset):
            problems.append(f"negative offset on edge {e.id}")

    known = set(instance.edge_index)
    for i, com in enumerate(instance.commodities):
        if not (com.demand > 0):
            problems.append(f"negative demand for commodity {i}" if com.demand < 0
                            else f"non-positive demand for commodity {i}")
        if com.source == com.target:
            problems.append(f"commodity {i} has identical source and target")
        if com.source not in verts or com.target not in verts:
            problems.append(f"commodity {i} references unknown vertex")
            continue
        if com.allowed_edges is not None and not com.allowed_edges <= known:
            problems.append(f"commodity {i} whitelists unknown edges {sorted(com.allowed_edges - known)}")
        if com.target not in reachable(instance, com.source, instance.allowed_masks[i]):
            problems.append(f"target {com.target} unreachable from {com.source} for commodity {i}")

    zero = [e.id for e in instance.edges if any(a == 0 for a in e.slope)]
    return ValidationReport(problems, instance.offsets_only, instance.parallel_links, zero)


# -- JSON ----------------------------------------------------------------------------


def instance_to_dict(instance: Instance) -> dict:
    return {
        "name": instance.name,
        "states": list(instance.state_space.states),
        "prior": list(instance.state_space.prior),
        "vertices": list(instance.vertices),
        "edges": [
            {"id": e.id, "tail": e.tail, "head": e.head, "slope": list(e.slope), "offset": list(e.offset)}
            for e in instance.edges
        ],
        "commodities": [
            {
                "source": c.source,
                "target": c.target,
                "demand": c.demand,
                **({"allowed_edges": sorted(c.allowed_edges, key=instance.edge_index.get)}
                   if c.allowed_edges is not None else {}),
            }
            for c in instance.commodities
        ],
    }


def instance_from_dict(data: dict) -> Instance:
    try:
        states = StateSpace(tuple(data["states"]), tuple(data["prior"]))
        edges = tuple(
            Edge(str(e["id"]), str(e["tail"]), str(e["head"]), tuple(e["slope"]), tuple(e["offset"]))
            for e in data["edges"]
        )
        commodities = tuple(
            Commodity(str(c["source"]), str(c["target"]), c["demand"],
                      frozenset(map(str, c["allowed_edges"])) if c.get("allowed_edges") is not None else None)
            for c in data["commodities"]
        )
        return Instance(tuple(data["vertices"]), edges, commodities, states, data.get("name", ""))
    except KeyError as exc:
        raise MissingField(f"instance JSON lacks field {exc.args[0]!r}") from exc


def dump_instance(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), indent=2)


def load_instance(text: str) -> Instance:
    return instance_from_dict(json.loads(text))


# -- TNTP ----------------------------------------------------------------------------

_TNTP_DEFAULT_COLUMNS = ("init_node", "term_node", "capacity", "length", "free_flow_time")


@dataclass(frozen=True)
class TntpLink:
    init_node: str
    term_node: str
    capacity: float
    free_flow_time: float


def read_tntp_links(text: str) -> list[TntpLink]:
    """Read the link table of a TNTP ``*_net.tntp`` file."""
    columns = list(_TNTP_DEFAULT_COLUMNS)
    links: list[TntpLink] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("<"):
            continue
        if line.startswith("~"):
            names = line.lstrip("~").replace(";", " ").split()
            if "init_node" in names:
                columns = [n.lower() for n in names]
            continue
        fields = line.rstrip(";").split()
        record = dict(zip(columns, fields))
        for key in ("init_node", "term_node", "capacity", "free_flow_time"):
            if key not in record:
                raise MissingField(f"missing {key}", lineno)
        try:
            cap = float(record["capacity"])
            fft = float(record["free_flow_time"])
        except ValueError as exc:
            raise ParseError(f"non-numeric field: {exc}", lineno) from None
        links.append(TntpLink(record["init_node"], record["term_node"], cap, fft))
    if not links:
        raise ParseError("no links found in TNTP text")
    return links


def parse_tntp(
    text: str,
    gamma: float = 0.15,
    tau: float = 0.0,
    seed: int = 42,
    offset_range: tuple[float, float] = (1.0, 15.0),
    source: str = "1",
    target: str = "19",
    demand: float = 1e5,
    mixed: bool = False,
) -> Instance:
    """Two-state instance with linearized BPR costs from a TNTP network.

    Slopes are ``gamma * t_e / C_e`` in both states; offsets are ``t_e`` in
    the first state.  A uniformly drawn subset of ``round(tau * m)`` edges
    gets a second-state offset from ``U(offset_range)``; all other edges keep
    ``t_e``.  With ``mixed=True`` every randomized edge picks with a fair
    coin which of the two states receives the random offset.

    Randomness uses ``numpy.random.default_rng(seed)`` in a fixed order: the
    edge subset first, then one uniform per selected edge in file order,
    then (``mixed`` only) one coin per selected edge in file order.
    """
    if gamma < 0:
        raise ModelError("gamma must be non-negative")
    if not 0.0 <= tau <= 1.0:
        raise ModelError("tau must lie in [0, 1]")
    links = read_tntp_links(text)
    m = len(links)
    n_random = int(round(tau * m))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(m, size=n_random, replace=False)) if n_random else np.array([], dtype=int)
    low, high = offset_range
    draws = rng.uniform(low, high, size=n_random)
    coins = rng.integers(0, 2, size=n_random) if mixed else np.zeros(n_random, dtype=int)
    random_offset = dict(zip(chosen.tolist(), zip(draws.tolist(), coins.tolist())))

    vertices: list[str] = []
    seen: set[str] = set()
    edges = []
    for k, link in enumerate(links):
        for v in (link.init_node, link.term_node):
            if v not in seen:
                seen.add(v)
                vertices.append(v)
        if link.capacity <= 0:
            raise ParseError(f"link {k + 1} has non-positive capacity")
        a = gamma * link.free_flow_time / link.capacity
        b1 = b2 = link.free_flow_time
        if k in random_offset:
            value, flip = random_offset[k]
            if flip:
                b1 = value
            else:
                b2 = value
        edges.append(Edge(f"e{k + 1}", link.init_node, link.term_node, (a, a), (b1, b2)))
    vertices.sort(key=lambda v: (len(v), v))
    return Instance(
        tuple(vertices), tuple(edges), (Commodity(source, target, demand),),
        StateSpace(("theta1", "theta2"), (0.5, 0.5)), name="sioux",
    )


def randomized_edge_count(instance: Instance) -> int:
    """Number of edges whose offsets differ between the two states."""
    off = instance.offsets
    return int(np.sum(np.any(off != off[:, :1], axis=1)))
