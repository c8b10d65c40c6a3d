"""Builders for the small worked games and the parametric families.

Specs are strings such as ``"braess"``, ``"nested_braess:j=2,eps=1e-6"`` or
``"sioux:path=SiouxFalls_net.tntp,tau=0.5,seed=7"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .model import Commodity, Edge, Instance, ModelError, StateSpace, parse_tntp

TWO_STATES = ("theta1", "theta2")
FAMILIES = ("example1", "example2", "example3", "braess", "nested_braess", "exp_supports",
            "sioux", "sioux_mixed")


class BadParameter(ModelError):
    pass


class UnsupportedJ(ModelError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    params: dict = field(default_factory=dict)

    def __str__(self):
        if not self.params:
            return self.family
        return self.family + ":" + ",".join(f"{k}={v}" for k, v in self.params.items())


def parse_spec(text: str) -> GeneratorSpec:
    family, _, rest = text.strip().partition(":")
    family = family.strip().lower()
    if family not in FAMILIES:
        raise BadParameter(f"unknown generator family {family!r}; choose from {', '.join(FAMILIES)}")
    params: dict = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise BadParameter(f"expected key=value, got {item!r}")
        params[key.strip()] = _coerce(value.strip())
    return GeneratorSpec(family, params)


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def _two_state(vertices, edges, commodities, name, prior=(0.5, 0.5)) -> Instance:
    return Instance(tuple(vertices), tuple(edges), tuple(commodities), StateSpace(TWO_STATES, prior), name)


def example1() -> Instance:
    """Three parallel links: ``2x+5 | 2x``, ``2x | 2x+4`` and the constant 3."""
    edges = [
        Edge("e1", "s", "t", (2, 2), (5, 0)),
        Edge("e2", "s", "t", (2, 2), (0, 4)),
        Edge("e3", "s", "t", (0, 0), (3, 3)),
    ]
    return _two_state(("s", "t"), edges, [Commodity("s", "t", 1.0)], "example1")


def example2() -> Instance:
    """Two populations of size 1/2; the first may only use ``e1``."""
    edges = [
        Edge("e1", "s", "t", (1, 1), (0, 1)),
        Edge("e2", "s", "t", (0, 0), (1, 0.5)),
    ]
    pops = [Commodity("s", "t", 0.5, frozenset({"e1"})), Commodity("s", "t", 0.5)]
    return _two_state(("s", "t"), edges, pops, "example2")


def example3() -> Instance:
    """Slopes that depend on the state, so revealing everything is suboptimal."""
    edges = [
        Edge("e1", "s", "t", (0, 1), (1, 0)),
        Edge("e2", "s", "t", (1, 0), (0, 2)),
    ]
    return _two_state(("s", "t"), edges, [Commodity("s", "t", 1.0)], "example3")


def braess() -> Instance:
    """Wheatstone network whose bridge costs 0 in the first state and 1 in the second."""
    edges = [
        Edge("e1", "s", "v1", (1, 1), (0, 0)),
        Edge("e2", "v1", "t", (0, 0), (1, 1)),
        Edge("e3", "s", "v2", (0, 0), (1, 1)),
        Edge("e4", "v2", "t", (1, 1), (0, 0)),
        Edge("e5", "v1", "v2", (0, 0), (0, 1)),
    ]
    return _two_state(("s", "v1", "v2", "t"), edges, [Commodity("s", "t", 1.0)], "braess")


def _check_j_eps(j, eps):
    if not isinstance(j, int) or j < 1:
        raise BadParameter("j must be a positive integer")
    if not 0 < eps <= 1e-3:
        raise BadParameter("eps must lie in (0, 1e-3]")


def _nested_edges(j: int, eps: float, scale: float = 1.0) -> tuple[list[str], list[Edge]]:
    verts = [f"v{i}" for i in range(2 * j + 2)]
    edges: list[Edge] = []
    for i in range(2 * j + 1):
        a = eps * scale if i == j else 1.0
        edges.append(Edge(f"p{i}", verts[i], verts[i + 1], (a, a), (0, 0)))
    for i in range(j):
        b = scale * 10.0 ** (j - 1 - i)
        edges.append(Edge(f"f{i}", verts[i], verts[2 * j - i], (0, 0), (b, b)))
    for i in range(j):
        b = scale * 10.0 ** (j - 1 - i)
        edges.append(Edge(f"g{i}", verts[i + 1], verts[2 * j + 1 - i], (0, 0), (b, b)))
    return verts, edges


def nested_braess(j: int = 1, eps: float = 1e-6, demand: float = 1.0) -> Instance:
    """Nested Braess graph on ``v0 .. v_{2j+1}`` (``s = v0``, ``t = v_{2j+1}``).

    Edge ids: ``p<i>`` for the spine ``(v_i, v_{i+1})`` (slope 1, the center
    one slope ``eps``), ``f<i>`` for ``(v_i, v_{2j-i})`` and ``g<i>`` for
    ``(v_{i+1}, v_{2j+1-i})``, both constant ``10**(j-1-i)``.
    """
    _check_j_eps(j, eps)
    if demand < 0:
        raise BadParameter("demand must be non-negative")
    verts, edges = _nested_edges(j, eps)
    return _two_state(verts, edges, [Commodity(verts[0], verts[-1], demand)], f"nested_braess_{j}")


def exp_supports(j: int = 1, eps: float = 1e-6) -> Instance:
    """Rescaled nested Braess graph next to a direct link ``estar`` costing 0 or 1.

    The constant edges and ``eps`` are multiplied by ``10**(1-j)/3``; the
    direct link has expected cost ``1 - alpha`` under belief ``(alpha, 1-alpha)``.
    """
    _check_j_eps(j, eps)
    verts, edges = _nested_edges(j, eps, scale=10.0 ** (1 - j) / 3.0)
    edges.append(Edge("estar", verts[0], verts[-1], (0, 0), (0, 1)))
    return _two_state(verts, edges, [Commodity(verts[0], verts[-1], 1.0)], f"exp_supports_{j}")


def nested_braess_cost(d: float, j: int = 1, eps: float = 1e-6) -> float:
    """Equilibrium path cost (per unit of flow) on ``nested_braess(1, eps)`` with demand ``d``."""
    if j != 1:
        raise UnsupportedJ("closed forms are only available for j = 1")
    if d < 0:
        raise BadParameter("demand must be non-negative")
    if d == 0:
        return 0.0
    if d <= 1.0 / (1.0 + eps):
        return d * (2.0 + eps)
    if d < 2.0:
        return (2.0 + eps * (d + 2.0)) / (1.0 + 2.0 * eps)
    return 1.0 + d / 2.0


def sioux(path, tau: float = 0.0, seed: int = 42, gamma: float = 0.15, demand: float = 1e5,
          source: str = "1", target: str = "19", low: float = 1.0, high: float = 15.0,
          mixed: bool = False) -> Instance:
    if not 0.0 <= tau <= 1.0:
        raise BadParameter("tau must lie in [0, 1]")
    text = Path(path).read_text()
    inst = parse_tntp(text, gamma=gamma, tau=tau, seed=seed, offset_range=(low, high),
                      source=source, target=target, demand=demand, mixed=mixed)
    return Instance(inst.vertices, inst.edges, inst.commodities, inst.state_space,
                    "sioux_mixed" if mixed else "sioux")


def build(spec: GeneratorSpec | str, **overrides) -> Instance:
    """Instantiate a generator spec; keyword overrides win over spec parameters."""
    if isinstance(spec, str):
        spec = parse_spec(spec)
    p = {**spec.params, **overrides}
    fam = spec.family
    try:
        if fam in ("example1", "example2", "example3", "braess"):
            if p:
                raise BadParameter(f"{fam} takes no parameters")
            return globals()[fam]()
        if fam == "nested_braess":
            return nested_braess(_whole(p.pop("j", 1)), float(p.pop("eps", 1e-6)), float(p.pop("demand", 1.0)),
                                 **_no_extra(p))
        if fam == "exp_supports":
            return exp_supports(_whole(p.pop("j", 1)), float(p.pop("eps", 1e-6)), **_no_extra(p))
        if "path" not in p:
            raise BadParameter(f"{fam} needs path=<TNTP net file>")
        mixed = fam == "sioux_mixed"
        low = float(p.pop("low", 0.0 if mixed else 1.0))
        return sioux(p.pop("path"), float(p.pop("tau", 0.0)), _whole(p.pop("seed", 42)),
                     float(p.pop("gamma", 0.15)), float(p.pop("demand", 1e5)),
                     str(p.pop("source", "1")), str(p.pop("target", "19")),
                     low, float(p.pop("high", 15.0)), mixed, **_no_extra(p))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise BadParameter(str(exc)) from None


def _whole(value) -> int:
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, int):
        raise BadParameter(f"expected an integer, got {value!r}")
    return value


def _no_extra(p: dict) -> dict:
    if p:
        raise BadParameter(f"unknown parameters: {', '.join(sorted(p))}")
    return {}
