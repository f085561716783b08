"""Command-line interface.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
3 contract violation. Every output starts with (JSON) or carries in its
first comment line (CSV) the run configuration that produced it.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .analysis import (
    SamplerSpec,
    balanced_path_experiment,
    distinguish_csv,
    distinguish_curve,
    estimate_planted_kl,
    kl_edge_exact,
    scaling_csv,
    vertex_sample_experiment,
)
from .decomposition import expander_decompose, hierarchical_decompose
from .errors import ContractViolation, GraphParseError, NumericalFailure
from .graph import Graph, load_graph
from .instances import instance_to_json_obj, sample_mu, sample_mu_double_prime, sample_mu_prime
from .recovery import spanning_forest
from .spectral import effective_resistance

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_CONTRACT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _pair(text: str) -> tuple[int, int]:
    vals = _int_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected u,v, got {text!r}")
    return vals[0], vals[1]


def _sampler(text: str) -> SamplerSpec:
    try:
        return SamplerSpec.parse(text)
    except ContractViolation as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def run_config(args: argparse.Namespace) -> dict:
    """Echo of the command and every parameter that affects output (worker count excluded)."""
    skip = {"func", "command", "experiment", "workers"}
    params = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        if isinstance(v, SamplerSpec):
            v = v.name
        elif isinstance(v, tuple):
            v = list(v)
        params[k] = v
    name = args.command if not getattr(args, "experiment", None) else f"experiment {args.experiment}"
    return {"command": name, "version": __version__, **params}


def _finite(x: float):
    return x if math.isfinite(x) else None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_bytes(text.encode())
    else:
        sys.stdout.buffer.write(text.encode())
        sys.stdout.flush()


def _emit_json(args, payload: dict) -> None:
    _emit(json.dumps({"config": run_config(args), **payload}, indent=1) + "\n", args.out)


def _emit_csv(args, body: str) -> None:
    _emit(f"# config: {json.dumps(run_config(args), sort_keys=True)}\n{body}", args.out)


def _load(args) -> Graph:
    try:
        return load_graph(args.graph, args.graph_format)
    except OSError as exc:
        raise UsageError(f"cannot read {args.graph}: {exc.strerror}") from None


def _check_vertex(g: Graph, *vs: int) -> None:
    for v in vs:
        if not 0 <= v < g.n:
            raise ContractViolation(f"vertex {v} out of range for n={g.n}")


# -- commands --------------------------------------------------------------------


def cmd_gen(args) -> None:
    if args.d < 2:
        raise UsageError("--d must be at least 2")
    if args.n < args.d:
        raise UsageError("--n must be at least --d")
    sampler = {"mu": sample_mu, "mu_prime": sample_mu_prime, "mu_double_prime": sample_mu_double_prime}[args.variant]
    inst = sampler(args.n, args.d, args.seed)
    _emit_json(args, instance_to_json_obj(inst))


def cmd_forest(args) -> None:
    if not 0.0 < args.delta < 1.0:
        raise UsageError("--delta must lie in (0, 1)")
    g = _load(args)
    res = spanning_forest(g, args.delta, args.seed)
    spans = len(Graph.from_edges(g.n, res.edges).components()) == len(g.components())
    _emit_json(
        args,
        {
            "n": g.n,
            "forest": [list(e) for e in res.edges],
            "success": res.success,
            "spanning_verified": spans,
            "rounds": res.rounds_used,
            "queries": res.queries,
            "failed_queries": res.failed_queries,
            "success_lower_bound": res.success_lower_bound,
        },
    )


def cmd_decompose(args) -> None:
    if not 0.0 < args.eps < 0.5:
        raise UsageError("--eps must lie in (0, 1/2)")
    if args.d_min < 1:
        raise UsageError("--d-min must be at least 1")
    g = _load(args)
    res = expander_decompose(g, args.eps, args.d_min)
    _emit_json(args, {"decomposition": res.to_json_obj()})


def cmd_hierarchical(args) -> None:
    if args.t is None and (args.d is None or args.delta is None):
        raise UsageError("give --t, or both --d and --delta")
    if args.t is not None and args.t < 1:
        raise UsageError("--t must be at least 1")
    g = _load(args)
    res = hierarchical_decompose(g, args.t, d=args.d, delta=args.delta)
    _emit_json(args, {"hierarchical": res.to_json_obj()})


def cmd_resistance(args) -> None:
    g = _load(args)
    pairs = [args.pair] if args.pair else g.sorted_edges()
    rows = []
    for u, v in pairs:
        _check_vertex(g, u, v)
        rows.append({"u": u, "v": v, "R": _finite(effective_resistance(g, u, v))})
    _emit_json(args, {"resistances": rows})


def cmd_kl(args) -> None:
    g = _load(args)
    u, v = args.edge
    _check_vertex(g, u, v)
    rep = kl_edge_exact(g, min(u, v), max(u, v))
    _emit_json(
        args,
        {
            "R": rep.R,
            "kl_exact": _finite(rep.kl_exact),
            "kl_bound_quarter": rep.kl_bound_quarter,
            "kl_min1": rep.kl_min1,
            "bridge_flag": rep.bridge_flag,
        },
    )


def _check_trials(args) -> None:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")


def cmd_kl_scaling(args) -> None:
    _check_trials(args)
    if args.d < 2 or min(args.n) < args.d:
        raise UsageError("need --d >= 2 and every n >= d")
    rows = [estimate_planted_kl(args.sampler, n, args.d, args.trials, args.seed, args.workers) for n in args.n]
    if args.format == "csv":
        _emit_csv(args, scaling_csv(rows))
    else:
        _emit_json(args, {"rows": [r.__dict__ for r in rows]})


def cmd_distinguish(args) -> None:
    _check_trials(args)
    if args.d < 2 or args.n < args.d or min(args.s) < 0:
        raise UsageError("need --d >= 2, --n >= d and s >= 0")
    rows = distinguish_curve(args.n, args.d, args.s, args.sampler, args.trials, args.seed, args.workers)
    if args.format == "csv":
        _emit_csv(args, distinguish_csv(rows))
    else:
        _emit_json(args, {"rows": [{**r.__dict__, "tvd_lb": r.tvd_lb} for r in rows]})


def cmd_vertex_sample(args) -> None:
    _check_trials(args)
    if not 0.0 < args.p <= 1.0:
        raise UsageError("--p must lie in (0, 1]")
    res = vertex_sample_experiment(args.n, args.p, args.trials, args.seed, args.floor, args.workers)
    _emit_json(args, {"certified_rate": res.rate, "worst_certificate": res.worst_value, "trials": res.trials})


def cmd_balanced_path(args) -> None:
    _check_trials(args)
    if args.d < 2 or args.n < args.d:
        raise UsageError("need --d >= 2 and --n >= d")
    if not 0.0 < args.phi < 1.0:
        raise UsageError("--phi must lie in (0, 1)")
    res = balanced_path_experiment(args.n, args.d, args.phi, args.trials, args.seed, not args.counts_only, args.workers)
    _emit_json(args, {"summary": res})


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sketchlab", description="Graph sketches, sparse recovery and expander decompositions.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, graph=False, seed=True):
        if graph:
            sp.add_argument("--graph", required=True, help="graph file (.json, otherwise edge list)")
            sp.add_argument("--graph-format", choices=["json", "edgelist"], default=None)
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output path (default: stdout)")

    sp = sub.add_parser("gen", help="sample a planted-edge instance")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--variant", choices=["mu", "mu_prime", "mu_double_prime"], default="mu")
    common(sp)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("forest", help="recover a spanning forest from l0 sketches")
    sp.add_argument("--delta", type=float, default=0.01)
    common(sp, graph=True)
    sp.set_defaults(func=cmd_forest)

    sp = sub.add_parser("decompose", help="expander decomposition")
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--d-min", type=float, default=1.0)
    common(sp, graph=True, seed=False)
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("hierarchical", help="hierarchical expander decomposition")
    sp.add_argument("--t", type=int, default=None)
    sp.add_argument("--d", type=float, default=None)
    sp.add_argument("--delta", type=float, default=None)
    common(sp, graph=True, seed=False)
    sp.set_defaults(func=cmd_hierarchical)

    sp = sub.add_parser("resistance", help="effective resistances")
    sp.add_argument("--pair", type=_pair, default=None, help="u,v (default: every edge)")
    common(sp, graph=True, seed=False)
    sp.set_defaults(func=cmd_resistance)

    sp = sub.add_parser("kl", help="exact KL divergence for one edge")
    sp.add_argument("--edge", type=_pair, required=True, help="u,v")
    common(sp, graph=True, seed=False)
    sp.set_defaults(func=cmd_kl)

    ex = sub.add_parser("experiment", help="Monte Carlo experiments")
    exs = ex.add_subparsers(dest="experiment", required=True, parser_class=_Parser)

    def trials(sp, default):
        sp.add_argument("--trials", type=int, default=default)
        sp.add_argument("--workers", type=int, default=None, help="worker processes (default: SKETCHLAB_THREADS or all cores)")

    sp = exs.add_parser("kl-scaling", help="mean min(1, KL) against n")
    sp.add_argument("--n", type=_int_list, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--sampler", type=_sampler, default=SamplerSpec())
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    trials(sp, 2000)
    common(sp)
    sp.set_defaults(func=cmd_kl_scaling)

    sp = exs.add_parser("distinguish", help="success rate of the likelihood-ratio test for theta")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--s", type=_int_list, required=True)
    sp.add_argument("--sampler", type=_sampler, default=SamplerSpec())
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    trials(sp, 2000)
    common(sp)
    sp.set_defaults(func=cmd_distinguish)

    sp = exs.add_parser("vertex-sample", help="certified conductance of vertex-sampled cliques")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--floor", type=float, default=0.05)
    trials(sp, 200)
    common(sp)
    sp.set_defaults(func=cmd_vertex_sample)

    sp = exs.add_parser("balanced-path", help="balanced-path conditions on layered cliques")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--phi", type=float, default=0.05)
    sp.add_argument("--counts-only", action="store_true", help="skip the expander certification of windows")
    trials(sp, 200)
    common(sp)
    sp.set_defaults(func=cmd_balanced_path)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"sketchlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GraphParseError as exc:
        print(f"sketchlab: input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"sketchlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ContractViolation as exc:
        print(f"sketchlab: contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
