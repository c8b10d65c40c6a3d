"""Command-line entry point: ``python -m congestion_signaling <command> ...``.

Exit codes: 0 success, 1 usage or input error, 2 verification failure,
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import generators
from .equilibrium import EquilibriumError, solve_wardrop, verify_wardrop
from .lp import LpError
from .model import Instance, ModelError, dump_instance, instance_to_dict, load_instance, make_belief
from .series_parallel import braess_witness, full_revelation_guarantee, is_series_parallel
from .signaling import (
    evaluate_scheme,
    full_revelation_scheme,
    grid_oracle_two_state,
    no_signal_scheme,
    optimal_scheme_lp,
    optimal_scheme_two_state,
    SignalingScheme,
    scheme_to_dict,
)
from .supports import (
    EnumerationError,
    RequiresTwoStates,
    cost_profile,
    enumerate_supports_parallel,
    enumerate_supports_two_state,
    is_concave,
)

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_SOLVER = 0, 1, 2, 3
SIOUX_TAUS = (0.05, 0.2, 0.5, 1.0)

log = logging.getLogger("congestion_signaling")


class UsageError(Exception):
    pass


class VerificationFailed(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- plumbing -----------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def load_source(args) -> Instance:
    if bool(args.instance) == bool(args.gen):
        raise UsageError("give exactly one of --instance or --gen")
    if args.instance:
        inst = load_instance(Path(args.instance).read_text())
    else:
        inst = generators.build(args.gen)
    if getattr(args, "prior", None):
        inst = inst.with_prior(_floats(args.prior))
    return inst


def emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _atlas_opts(args) -> dict:
    return {"support_eps": args.tol_support, "eps_slope": args.eps_slope, "gap_tol": args.tol_gap,
            "seed": args.seed}


# -- commands -------------------------------------------------------------------------------------


def cmd_gen(args) -> int:
    inst = load_source(args)
    emit(args, dump_instance(inst))
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = load_source(args)
    belief = make_belief(_floats(args.belief), inst.n_states) if args.belief else inst.prior
    res = solve_wardrop(inst, belief, fw_gap_tol=args.tol_gap, support_eps=args.tol_support,
                        eps_slope=args.eps_slope)
    report = verify_wardrop(inst, belief, res.flow)
    out = res.to_dict(inst)
    out["belief"] = list(belief.weights)
    out["verified"] = report.passed
    emit(args, _json(out))
    if not report.passed:
        raise VerificationFailed(f"KKT residual {report.residual:.3e} exceeds {report.tol:.1e}")
    return EXIT_OK


def _profile_svg(profile, concave: bool, width: int = 640, height: int = 400, pad: int = 40) -> str:
    xs, ys = profile.breakpoints, profile.values
    lo, hi = float(ys.min()), float(ys.max())
    span = hi - lo or 1.0

    def px(a):
        return pad + a * (width - 2 * pad)

    def py(c):
        return height - pad - (c - lo) / span * (height - 2 * pad)

    pts = " ".join(f"{px(a):.3f},{py(c):.3f}" for a, c in zip(xs, ys))
    marks = "\n".join(f'  <circle cx="{px(a):.3f}" cy="{py(c):.3f}" r="3" fill="red"/>'
                      for a, c in zip(xs[1:-1], ys[1:-1]))
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
            f"  <title>C(alpha), concave={str(concave).lower()}</title>\n"
            f'  <line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="gray"/>\n'
            f'  <line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="gray"/>\n'
            f'  <text x="{pad}" y="{height - 10}" font-size="12">alpha=0</text>\n'
            f'  <text x="{width - pad - 40}" y="{height - 10}" font-size="12">alpha=1</text>\n'
            f'  <text x="{pad + 4}" y="{pad - 8}" font-size="12">cost {lo:.6g} .. {hi:.6g}</text>\n'
            f'  <polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>\n'
            f"{marks}\n</svg>\n")


def cmd_profile(args) -> int:
    inst = load_source(args)
    atlas = enumerate_supports_two_state(inst, **_atlas_opts(args))
    profile = cost_profile(atlas)
    concave = is_concave(profile)
    if args.format == "svg":
        emit(args, _profile_svg(profile, concave))
    elif args.format == "json":
        emit(args, _json({**atlas.to_dict(), "concave": concave,
                          "interior_breakpoints": atlas.interior_breakpoints}))
    else:
        emit(args, atlas.to_csv())
    print(f"concave={str(concave).lower()} interior_breakpoints={len(atlas.interior_breakpoints)} "
          f"regions={len(atlas.regions)} lp_solves={atlas.lp_solves}", file=sys.stderr)
    bad = [r for r in atlas.regions if r.midpoint_residual > 1e-6]
    if bad:
        raise VerificationFailed(f"{len(bad)} regions fail midpoint verification")
    return EXIT_OK


def cmd_enum(args) -> int:
    inst = load_source(args)
    if inst.n_states == 2 and inst.offsets_only and not (inst.parallel_links and args.parallel):
        atlas = enumerate_supports_two_state(inst, **_atlas_opts(args))
        out = {"method": "atlas", "distinct_supports": len(atlas.distinct_supports), **atlas.to_dict()}
    else:
        sups = sorted(enumerate_supports_parallel(inst, seed=args.seed))
        out = {"method": "orderings", "distinct_supports": len(sups), "supports": sups}
    if args.format == "csv" and out["method"] == "atlas":
        emit(args, atlas.to_csv())
    else:
        emit(args, _json(out))
    return EXIT_OK


def cmd_scheme(args) -> int:
    inst = load_source(args)
    prior = np.asarray(inst.prior.weights)
    full = evaluate_scheme(inst, full_revelation_scheme(prior)).total
    none = evaluate_scheme(inst, no_signal_scheme(prior)).total
    out = {"prior": prior.tolist(), "full": full, "none": none}
    if not inst.offsets_only:
        if inst.n_states != 2:
            raise RequiresTwoStates("the grid oracle handles two states only")
        oracle = grid_oracle_two_state(inst)
        out.update(optimal=oracle.value, method="oracle",
                   posteriors=[[a, 1.0 - a] for a in oracle.posteriors], weights=list(oracle.weights))
    elif inst.n_states == 2:
        opt = optimal_scheme_two_state(inst, **_atlas_opts(args))
        ev = evaluate_scheme(inst, opt.scheme)
        out.update(optimal=opt.cost, method="lp", envelope=opt.envelope_cost,
                   scheme=scheme_to_dict(opt.scheme, ev), supports=[[list(s) for s in sup] for sup in opt.supports])
    else:
        lp = optimal_scheme_lp(inst, sorted(enumerate_supports_parallel(inst, seed=args.seed)))
        scheme = SignalingScheme(np.column_stack([b.phi for b in lp.issued_blocks]))
        out.update(optimal=lp.cost, method="lp", scheme=scheme_to_dict(scheme, evaluate_scheme(inst, scheme)))
    emit(args, _json(out))
    if out["optimal"] > min(full, none) + 1e-6 * max(1.0, abs(full)):
        raise VerificationFailed("optimum exceeds a baseline scheme")
    return EXIT_OK


def cmd_spcheck(args) -> int:
    inst = load_source(args)
    com = inst.commodities[0]
    sp = is_series_parallel(inst, com.source, com.target)
    g = full_revelation_guarantee(inst)
    out = {"series_parallel": bool(sp), "guarantee": g.guaranteed, "reasons": g.reasons}
    if sp:
        out["decomposition"] = sp.tree.glued().to_dict()
    else:
        out["kernel"] = [list(p) for p in sp.kernel]
        witness = braess_witness(inst, com.source, com.target)
        out["witness"] = instance_to_dict(witness)
        out["witness_full"] = evaluate_scheme(witness, full_revelation_scheme(witness.prior.weights)).total
        out["witness_none"] = evaluate_scheme(witness, no_signal_scheme(witness.prior.weights)).total
    emit(args, _json(out))
    return EXIT_OK


def sioux_run(path: str, tau: float, seed: int, demand: float, source: str, target: str, opts: dict) -> dict:
    inst = generators.sioux(path, tau=tau, seed=seed, demand=demand, source=source, target=target)
    atlas = enumerate_supports_two_state(inst, **opts)
    return {"tau": tau, "seed": seed, "supports": len(atlas.distinct_supports), "regions": len(atlas.regions),
            "lp_solves": atlas.lp_solves,
            "max_residual": max((r.midpoint_residual for r in atlas.regions), default=0.0)}


def cmd_experiment(args) -> int:
    if not args.instance:
        raise UsageError("experiment needs --instance <TNTP net file>")
    taus = _floats(args.tau) if args.tau else list(SIOUX_TAUS)
    if args.runs < 0:
        raise UsageError("--runs must be non-negative")
    opts = {k: v for k, v in _atlas_opts(args).items() if k != "seed"}
    jobs = [(args.instance, tau, args.seed + k, args.demand, args.source, args.target, opts)
            for tau in taus for k in range(args.runs)]
    if args.jobs > 1 and jobs:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(sioux_run, *zip(*jobs)))
    else:
        rows = [sioux_run(*job) for job in jobs]
    rows.sort(key=lambda r: (r["tau"], r["seed"]))
    hist = {tau: dict(sorted(Counter(r["supports"] for r in rows if r["tau"] == tau).items())) for tau in taus}
    if args.format == "json":
        emit(args, _json({"runs": rows, "histogram": {str(t): h for t, h in hist.items()}}))
    else:
        buf = io.StringIO()
        fields = ["tau", "seed", "supports", "regions", "lp_solves", "max_residual"]
        w = csv.DictWriter(buf, fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        emit(args, buf.getvalue())
    for tau, h in hist.items():
        print(f"tau={tau}: " + " ".join(f"{k}:{v}" for k, v in h.items()), file=sys.stderr)
    if any(r["max_residual"] > 1e-5 for r in rows):
        raise VerificationFailed("a region failed midpoint verification")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "profile": cmd_profile, "enum": cmd_enum,
            "scheme": cmd_scheme, "spcheck": cmd_spcheck, "experiment": cmd_experiment}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="congestion_signaling", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--instance", help="instance JSON (for experiment: a TNTP net file)")
        p.add_argument("--gen", help="generator spec, e.g. nested_braess:j=2")
        p.add_argument("--belief", help="comma-separated belief for solve")
        p.add_argument("--prior", help="comma-separated prior overriding the instance's")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("json", "csv", "svg"),
                       default="csv" if name in ("profile", "experiment") else "json")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--tol-gap", type=float, default=1e-9)
        p.add_argument("--tol-support", type=float, default=1e-7)
        p.add_argument("--eps-slope", type=float, default=1e-9)
        if name == "enum":
            p.add_argument("--parallel", action="store_true", help="use offset orderings on parallel links")
        if name == "experiment":
            p.add_argument("--tau", help="comma-separated tau values")
            p.add_argument("--runs", type=int, default=10)
            p.add_argument("--demand", type=float, default=1e5)
            p.add_argument("--source", default="1")
            p.add_argument("--target", default="19")
            p.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ModelError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VerificationFailed as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (EquilibriumError, LpError, EnumerationError, RuntimeError) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
