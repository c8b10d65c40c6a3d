import numpy as np
from hypothesis import strategies as st

from congestion_signaling.model import Commodity, Edge, Instance, StateSpace
from congestion_signaling.series_parallel import random_sp_network

from .oracles import parallel_instance

coef = st.floats(0.0, 5.0, allow_nan=False).map(lambda v: round(v, 3))
slope = st.one_of(st.just(0.0), st.floats(0.1, 3.0).map(lambda v: round(v, 3)))
alphas = st.floats(0.0, 1.0)


@st.composite
def parallel_offsets_only(draw, max_links=6):
    m = draw(st.integers(1, max_links))
    slopes = draw(st.lists(slope, min_size=m, max_size=m))
    if not any(slopes):
        slopes[0] = 1.0
    b1 = draw(st.lists(coef, min_size=m, max_size=m))
    b2 = draw(st.lists(coef, min_size=m, max_size=m))
    demand = draw(st.floats(0.2, 4.0))
    p = draw(st.floats(0.05, 0.95))
    return parallel_instance(slopes, b1, b2, demand, (p, 1 - p))


@st.composite
def sp_offsets_only(draw, max_edges=7):
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    net = random_sp_network(rng, draw(st.integers(1, max_edges)))
    verts, edges = [], []
    for eid, u, v in net:
        for x in (u, v):
            if x not in verts:
                verts.append(x)
        a = 0.0 if rng.random() < 0.15 else float(rng.uniform(0.2, 3.0))
        edges.append(Edge(eid, u, v, (a, a), tuple(float(b) for b in rng.uniform(0.0, 5.0, 2))))
    p = draw(st.floats(0.05, 0.95))
    return Instance(tuple(verts), tuple(edges), (Commodity("s", "t", float(rng.uniform(0.5, 3.0))),),
                    StateSpace(("theta1", "theta2"), (p, 1 - p)))


@st.composite
def braess_family(draw):
    """Wheatstone graph with random affine costs; every edge has positive slope."""
    vals = [draw(st.floats(0.2, 2.0)) for _ in range(5)]
    offs = [(draw(coef), draw(coef)) for _ in range(5)]
    spec = [("e1", "s", "v1"), ("e2", "v1", "t"), ("e3", "s", "v2"), ("e4", "v2", "t"), ("e5", "v1", "v2")]
    edges = tuple(Edge(k, u, v, (a, a), b) for (k, u, v), a, b in zip(spec, vals, offs))
    return Instance(("s", "v1", "v2", "t"), edges, (Commodity("s", "t", draw(st.floats(0.5, 3.0))),),
                    StateSpace(("theta1", "theta2"), (0.5, 0.5)))
