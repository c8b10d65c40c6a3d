"""Public signaling schemes: construction, evaluation and optimization.

A scheme is a nonnegative ``(d, k)`` matrix ``phi`` whose rows sum to the
prior; column ``k`` is a signal, its mass is the column sum and its
posterior the normalized column.  The optimizer solves a single LP with one
block of (scaled) equilibrium variables per candidate support vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equilibrium import (
    EPS_SLOPE,
    mask_to_support,
    parallel_links_wardrop,
    solve_wardrop,
    support_masks,
    verify_wardrop,
)
from .lp import LpInfeasible, LpUnbounded, RowBuilder, solve_lp
from .model import Belief, Instance, NotADistribution, alpha_belief
from .supports import (
    RequiresOffsetsOnly,
    RequiresTwoStates,
    SupportAtlas,
    cost_profile,
    enumerate_supports_two_state,
    envelope_value,
    lower_convex_envelope,
)

MASS_EPS = 1e-12


@dataclass
class SignalingScheme:
    phi: np.ndarray  # (states, signals)

    def __post_init__(self):
        self.phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        if np.any(self.phi < -1e-12):
            raise NotADistribution("signaling scheme has negative entries")
        self.phi = np.maximum(self.phi, 0.0)

    @property
    def n_signals(self) -> int:
        return self.phi.shape[1]

    @property
    def masses(self) -> np.ndarray:
        return self.phi.sum(axis=0)

    @property
    def prior(self) -> np.ndarray:
        return self.phi.sum(axis=1)

    def issued(self) -> list[int]:
        return [k for k, m in enumerate(self.masses) if m > MASS_EPS]

    def posterior(self, k: int) -> Belief:
        col = self.phi[:, k]
        return Belief(tuple(col / col.sum()))

    def check_prior(self, prior, tol: float = 1e-9) -> None:
        if np.max(np.abs(self.prior - np.asarray(prior, dtype=float))) > tol:
            raise NotADistribution("scheme rows do not sum to the prior")


def full_revelation_scheme(prior) -> SignalingScheme:
    """One signal per state, sent exactly when that state occurs."""
    return SignalingScheme(np.diag(np.asarray(prior, dtype=float)))


def no_signal_scheme(prior) -> SignalingScheme:
    return SignalingScheme(np.asarray(prior, dtype=float).reshape(-1, 1))


@dataclass
class SignalOutcome:
    index: int
    mass: float
    posterior: Belief
    cost: float

    def to_dict(self, phi_column) -> dict:
        return {"phi": [float(v) for v in phi_column], "posterior": list(self.posterior.weights),
                "mass": self.mass, "cost": self.cost}


@dataclass
class SchemeEvaluation:
    signals: list[SignalOutcome]

    @property
    def total(self) -> float:
        return float(sum(s.mass * s.cost for s in self.signals))


def _equilibrium_cost(instance: Instance, belief: Belief, **opts) -> float:
    if instance.parallel_links and len(instance.commodities) == 1:
        return parallel_links_wardrop(instance, belief).cost
    return solve_wardrop(instance, belief, **opts).cost


def evaluate_scheme(instance: Instance, scheme: SignalingScheme, **solver_opts) -> SchemeEvaluation:
    """Expected equilibrium cost; one equilibrium per issued signal."""
    scheme.check_prior(instance.prior.weights)
    out = []
    for k in scheme.issued():
        post = scheme.posterior(k)
        out.append(SignalOutcome(k, float(scheme.masses[k]), post, _equilibrium_cost(instance, post, **solver_opts)))
    return SchemeEvaluation(out)


def scheme_to_dict(scheme: SignalingScheme, evaluation: SchemeEvaluation) -> dict:
    return {"signals": [s.to_dict(scheme.phi[:, s.index]) for s in evaluation.signals],
            "total_cost": evaluation.total}


# -- the support-indexed LP -----------------------------------------------------------


@dataclass
class SignalBlock:
    support: tuple
    phi: np.ndarray  # per-state mass of this signal
    flow: np.ndarray | None  # unscaled (r, m) flow at the posterior; None when not issued
    cost: float  # equilibrium cost at the posterior (nan when not issued)
    residual: float

    @property
    def mass(self) -> float:
        return float(self.phi.sum())


@dataclass
class LpScheme:
    scheme: SignalingScheme
    cost: float
    blocks: list[SignalBlock]

    @property
    def issued_blocks(self) -> list[SignalBlock]:
        return [b for b in self.blocks if b.mass > MASS_EPS]


def optimal_scheme_lp(instance: Instance, candidates, prior=None) -> LpScheme:
    """Best scheme whose signals induce equilibria with supports among ``candidates``.

    One LP: each candidate gets a block of scaled flows ``y = phi_sigma x``,
    scaled potentials and its column of ``phi``; the objective is the sum of
    ``d_i * pi_t`` over blocks.  Zero blocks are allowed, so candidates that
    are never optimal simply receive no mass.
    """
    if not instance.offsets_only:
        raise RequiresOffsetsOnly("the signaling LP needs state-independent slopes")
    prior = np.asarray(instance.prior.weights if prior is None else prior, dtype=float)
    masks = [support_masks(instance, c) for c in candidates]
    if not masks:
        raise ValueError("no candidate supports given")
    r, m, n = len(instance.commodities), len(instance.edges), len(instance.vertices)
    d = instance.n_states
    scale = float(instance.demands.max())
    slope = instance.slopes[:, 0]
    offs = instance.offsets

    # column layout per block: phi (d), y (|mask|), pi (r * n)
    layout = []
    col = 0
    for mask in masks:
        ycols = {(int(i), int(k)): col + d + j for j, (i, k) in enumerate(zip(*np.nonzero(mask)))}
        pbase = col + d + len(ycols)
        layout.append((col, ycols, pbase))
        col = pbase + r * n
    ncols = col

    eq = RowBuilder(ncols)
    ub = RowBuilder(ncols)
    c = np.zeros(ncols)
    bounds: list[tuple] = [(None, None)] * ncols
    for mask, (pc, ycols, pbase) in zip(masks, layout):
        for t in range(d):
            bounds[pc + t] = (0.0, float(prior[t]))
        for yc in ycols.values():
            bounds[yc] = (0.0, None)
        for i, com in enumerate(instance.commodities):
            s, tgt = instance.vertex_index[com.source], instance.vertex_index[com.target]
            bounds[pbase + i * n + s] = (0.0, 0.0)
            c[pbase + i * n + tgt] = com.demand
            for k in np.flatnonzero(instance.allowed_masks[i]):
                u, w = int(instance.tails[k]), int(instance.heads[k])
                coeffs: dict[int, float] = {pbase + i * n + w: 1.0}
                coeffs[pbase + i * n + u] = coeffs.get(pbase + i * n + u, 0.0) - 1.0
                for t in range(d):
                    coeffs[pc + t] = -offs[k, t]
                for j in range(r):
                    if mask[j, k]:
                        coeffs[ycols[(j, int(k))]] = -slope[k] * scale
                (eq if mask[i, k] else ub).add(coeffs, 0.0)
            ks = np.flatnonzero(mask[i])
            touched = {s, tgt} | set(instance.tails[ks].tolist()) | set(instance.heads[ks].tolist())
            for v in sorted(touched):
                coeffs = {}
                for k in ks:
                    yc = ycols[(i, int(k))]
                    if instance.tails[k] == v:
                        coeffs[yc] = coeffs.get(yc, 0.0) + 1.0
                    if instance.heads[k] == v:
                        coeffs[yc] = coeffs.get(yc, 0.0) - 1.0
                sign = 1.0 if v == s else (-1.0 if v == tgt else 0.0)
                if sign:
                    for t in range(d):
                        coeffs[pc + t] = -sign * com.demand / scale
                eq.add(coeffs, 0.0)
    for t in range(d):
        eq.add({pc + t: 1.0 for pc, _, _ in layout}, float(prior[t]))

    A_eq, b_eq = eq.matrix()
    A_ub, b_ub = ub.matrix()
    res = solve_lp(c, A_eq, b_eq, A_ub, b_ub, bounds)
    if res.status == "infeasible":
        empty = [k for k, mk in enumerate(masks) if not _region_feasible(instance, mk)]
        raise LpInfeasible(f"signaling LP infeasible; candidates admitting no belief: {empty}")
    if res.status == "unbounded":
        raise LpUnbounded("signaling LP unbounded")

    phi = np.zeros((d, len(masks)))
    blocks = []
    for k, (mask, (pc, ycols, pbase)) in enumerate(zip(masks, layout)):
        col_phi = np.maximum(res.x[pc:pc + d], 0.0)
        phi[:, k] = col_phi
        mass = col_phi.sum()
        support = mask_to_support(instance, mask)
        if mass <= MASS_EPS:
            blocks.append(SignalBlock(support, col_phi, None, float("nan"), 0.0))
            continue
        flow = np.zeros((r, m))
        for (i, e), yc in ycols.items():
            flow[i, e] = max(res.x[yc], 0.0) * scale / mass
        post = Belief(tuple(col_phi / mass))
        cost = float(sum(com.demand * res.x[pbase + i * n + instance.vertex_index[com.target]]
                         for i, com in enumerate(instance.commodities))) / mass
        residual = verify_wardrop(instance, post, flow).residual
        blocks.append(SignalBlock(support, col_phi, flow, cost, residual))
    # rescale rows so they match the prior exactly despite solver tolerances
    phi *= np.where(phi.sum(axis=1) > 0, prior / np.maximum(phi.sum(axis=1), 1e-300), 0.0)[:, None]
    return LpScheme(SignalingScheme(phi), float(res.objective), blocks)


def _region_feasible(instance: Instance, mask: np.ndarray) -> bool:
    """Does some belief have an equilibrium supported on ``mask``?"""
    r, n, d = len(instance.commodities), len(instance.vertices), instance.n_states
    scale = float(instance.demands.max())
    ycols = {(int(i), int(k)): d + j for j, (i, k) in enumerate(zip(*np.nonzero(mask)))}
    pbase = d + len(ycols)
    ncols = pbase + r * n
    eq, ub = RowBuilder(ncols), RowBuilder(ncols)
    slope, offs = instance.slopes[:, 0], instance.offsets
    for i, com in enumerate(instance.commodities):
        s, tgt = instance.vertex_index[com.source], instance.vertex_index[com.target]
        for k in np.flatnonzero(instance.allowed_masks[i]):
            u, w = int(instance.tails[k]), int(instance.heads[k])
            coeffs = {pbase + i * n + w: 1.0}
            coeffs[pbase + i * n + u] = coeffs.get(pbase + i * n + u, 0.0) - 1.0
            for t in range(d):
                coeffs[t] = -offs[k, t]
            for j in range(r):
                if mask[j, k]:
                    coeffs[ycols[(j, int(k))]] = -slope[k] * scale
            (eq if mask[i, k] else ub).add(coeffs, 0.0)
        ks = np.flatnonzero(mask[i])
        for v in sorted({s, tgt} | set(instance.tails[ks].tolist()) | set(instance.heads[ks].tolist())):
            coeffs = {}
            for k in ks:
                yc = ycols[(i, int(k))]
                coeffs[yc] = coeffs.get(yc, 0.0) + (instance.tails[k] == v) - (instance.heads[k] == v)
            rhs = com.demand / scale if v == s else (-com.demand / scale if v == tgt else 0.0)
            eq.add(coeffs, rhs)
    eq.add({t: 1.0 for t in range(d)}, 1.0)
    bounds = [(0.0, 1.0)] * d + [(0.0, None)] * len(ycols) + [(None, None)] * (r * n)
    for i, com in enumerate(instance.commodities):
        bounds[pbase + i * n + instance.vertex_index[com.source]] = (0.0, 0.0)
    A_eq, b_eq = eq.matrix()
    A_ub, b_ub = ub.matrix()
    return solve_lp(np.zeros(ncols), A_eq, b_eq, A_ub, b_ub, bounds).status == "optimal"


# -- pruning ------------------------------------------------------------------------------


def _nested(a, b) -> bool:
    return all(set(x) <= set(y) for x, y in zip(a, b))


def prune_scheme(scheme: SignalingScheme, supports, instance: Instance | None = None,
                 tol: float = 1e-9) -> tuple[SignalingScheme, list]:
    """Drop unissued signals, merge nested supports, and cut down to at most ``d`` signals.

    Signals with identical supports are always merged.  A signal whose
    supports are nested in another's is merged only when ``instance`` is
    given and re-evaluation shows the total cost unchanged within ``tol``;
    nesting alone does not guarantee that.  With ``instance``, a final
    vertex LP over the issued posteriors keeps at most ``d`` signals.
    """
    phi = scheme.phi.copy()
    sups = list(supports)
    keep = [k for k in range(phi.shape[1]) if phi[:, k].sum() > MASS_EPS]
    phi, sups = phi[:, keep], [sups[k] for k in keep]

    def total(p):
        return evaluate_scheme(instance, SignalingScheme(p)).total

    changed = True
    while changed:
        changed = False
        for a in range(len(sups)):
            for b in range(len(sups)):
                if a == b or not _nested(sups[a], sups[b]):
                    continue
                merged = np.delete(phi, a, axis=1)
                merged[:, b - (b > a)] += phi[:, a]
                if sups[a] != sups[b]:
                    if instance is None or abs(total(merged) - total(phi)) > tol * max(1.0, abs(total(phi))):
                        continue
                phi = merged
                del sups[a]
                changed = True
                break
            if changed:
                break

    if instance is not None and phi.shape[1] > phi.shape[0]:
        phi, sups = _caratheodory(instance, phi, sups)
    return SignalingScheme(phi), sups


def _caratheodory(instance: Instance, phi: np.ndarray, sups: list):
    """Vertex of {w >= 0 : sum_k w_k mu_k = prior} minimizing expected cost."""
    masses = phi.sum(axis=0)
    posts = phi / masses
    costs = np.array([_equilibrium_cost(instance, Belief(tuple(posts[:, k]))) for k in range(phi.shape[1])])
    prior = phi.sum(axis=1)
    res = solve_lp(costs, A_eq=posts, b_eq=prior, bounds=[(0, None)] * len(costs), method="highs-ds")
    if res.status != "optimal":
        return phi, sups
    keep = [k for k in range(len(costs)) if res.x[k] > MASS_EPS]
    return posts[:, keep] * res.x[keep], [sups[k] for k in keep]


# -- two-state pipeline ----------------------------------------------------------------------


@dataclass
class TwoStateOptimum:
    scheme: SignalingScheme
    cost: float
    atlas: SupportAtlas
    supports: list = field(default_factory=list)
    envelope_cost: float = float("nan")


def optimal_scheme_two_state(instance: Instance, prior=None, atlas: SupportAtlas | None = None,
                             **atlas_opts) -> TwoStateOptimum:
    """Atlas supports fed to the signaling LP, then pruned; cross-checked by the convex envelope."""
    if instance.n_states != 2:
        raise RequiresTwoStates("two states required")
    prior = np.asarray(instance.prior.weights if prior is None else prior, dtype=float)
    inst = instance.with_prior(tuple(prior))
    if atlas is None:
        atlas = enumerate_supports_two_state(inst, **atlas_opts)
    candidates = list(dict.fromkeys(atlas.supports))
    lp = optimal_scheme_lp(inst, candidates)
    issued = lp.issued_blocks
    phi = np.column_stack([b.phi for b in issued])
    scheme, sups = prune_scheme(SignalingScheme(phi), [b.support for b in issued], inst)
    cost = evaluate_scheme(inst, scheme).total
    env = envelope_value(cost_profile(atlas), float(prior[0]))
    return TwoStateOptimum(scheme, cost, atlas, sups, env)


# -- grid oracle --------------------------------------------------------------------------------


@dataclass
class GridOracle:
    alphas: np.ndarray
    costs: np.ndarray
    value: float
    posteriors: tuple[float, float]  # alpha of the two posteriors of the best split
    weights: tuple[float, float]


def _cost_curve(instance: Instance, alphas, eps_slope=EPS_SLOPE):
    water = instance.parallel_links and len(instance.commodities) == 1
    out = np.empty(len(alphas))
    actives = []
    for k, a in enumerate(alphas):
        res = parallel_links_wardrop(instance, alpha_belief(a)) if water else solve_wardrop(instance, alpha_belief(a))
        out[k] = res.cost
        actives.append(tuple(np.flatnonzero(res.flow.sum(axis=0) > 1e-12 * instance.demands.max())))
    return out, actives


def grid_oracle_two_state(instance: Instance, prior=None, n: int = 10_000, refine: int = 40) -> GridOracle:
    """Brute-force optimal two-signal split on a uniform belief grid.

    The grid is refined by bisection wherever the set of used links changes
    between neighbours, so kinks of a piecewise-linear profile are located
    to within ``2**-refine`` of the grid spacing.  Works for any slopes; for
    single-commodity parallel links it uses water-filling.
    """
    if instance.n_states != 2:
        raise RequiresTwoStates("two states required")
    prior = np.asarray(instance.prior.weights if prior is None else prior, dtype=float)
    alphas = np.linspace(0.0, 1.0, n + 1)
    costs, actives = _cost_curve(instance, alphas)
    extra_a, extra_c = [], []
    for k in range(n):
        if actives[k] == actives[k + 1]:
            continue
        lo, hi, alo, ahi = alphas[k], alphas[k + 1], actives[k], actives[k + 1]
        for _ in range(refine):
            mid = 0.5 * (lo + hi)
            (cm,), (am,) = _cost_curve(instance, [mid])
            extra_a.append(mid)
            extra_c.append(cm)
            if am == alo:
                lo = mid
            else:
                hi, ahi = mid, am
    xs = np.concatenate([alphas, extra_a])
    ys = np.concatenate([costs, extra_c])
    order = np.argsort(xs, kind="stable")
    xs, ys = xs[order], ys[order]
    hx, hy = lower_convex_envelope(xs, ys)
    a = float(prior[0])
    value = float(np.interp(a, hx, hy))
    j = int(np.clip(np.searchsorted(hx, a), 1, len(hx) - 1))
    left, right = float(hx[j - 1]), float(hx[j])
    w_right = 0.0 if right == left else (a - left) / (right - left)
    if a in (left, right) or w_right in (0.0, 1.0):
        pts = (a, a)
        w = (1.0, 0.0)
    else:
        pts = (left, right)
        w = (1.0 - w_right, w_right)
    return GridOracle(xs, ys, value, pts, w)


def point_masses_cost(instance: Instance) -> float:
    """Cost of full revelation, computed directly from point-mass equilibria."""
    prior = np.asarray(instance.prior.weights)
    total = 0.0
    for t, p in enumerate(prior):
        if p > 0:
            total += p * _equilibrium_cost(instance, Belief(tuple(np.eye(len(prior))[t])))
    return total

