"""Command line entry point.

Exit status: 0 on success, 2 for configuration or input errors, and 3 when
an instance failed. On a 3, partial results are still written.
"""

import argparse
import csv
import json
import sys
import warnings
from dataclasses import replace

from . import canonical as cn
from . import mixing as mx
from .experiment import (ConfigError, ExperimentConfig, analysis_section, build_canonical,
                         emit_plots, load_records, mixing_section, paths_section, run_ensemble,
                         _clean)
from .generator import GtgConfig, generate_gtg
from .graphio import GraphFormatError, read_graph, write_graph
from .weights import WeightDistribution, admissible_alpha, auto_c

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 2, 3


def _auto_or_float(text):
    if text == "auto":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def _dist(text):
    try:
        return WeightDistribution.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _emit(obj, path=None):
    text = json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _weight_args(p):
    p.add_argument("--weights", type=_dist, default=WeightDistribution.exponential(),
                   help="exp, pareto:<gamma> or const:<w0> (default exp)")
    p.add_argument("--alpha", type=_auto_or_float, default=None,
                   help="high-weight tail mass, or 'auto' (default)")


def _alpha(args):
    return admissible_alpha(args.weights) if args.alpha is None else args.alpha


def cmd_generate(args):
    c = auto_c(args.weights, args.d) if args.c is None else args.c
    cfg = GtgConfig(n=args.n, d=args.d, c=c, dist=args.weights, alpha=_alpha(args), seed=args.seed)
    g = generate_gtg(cfg)
    write_graph(g, args.out)
    _emit({"n": g.n, "d": g.d, "c": c, "theta": g.theta, "seed": g.seed, "edges": g.edge_count,
           "out": args.out})
    return EXIT_OK


def cmd_analyze(args):
    g = read_graph(args.inp)
    rec = {"seed": g.seed, "n": g.n, "d": g.d, "c": g.c}
    rec.update(analysis_section(g, args.weights, _alpha(args)))
    _emit(rec, args.out)
    return EXIT_OK


def cmd_paths(args):
    g = read_graph(args.inp)
    ps = build_canonical(g, args.weights, _alpha(args), args.seed, mode=args.mode, pairs=args.pairs)
    rho, summary = paths_section(g, ps)
    if args.csv:
        stats = cn.classify_edges(g, ps.reps, ps.edges)
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["edge_i", "edge_j", "Z", "sigma", "load_class"])
            for (i, j), z, s, cls in zip(ps.edges.tolist(), ps.Z * ps.scale, ps.sigma * ps.scale, stats):
                w.writerow([i, j, repr(float(z)), repr(float(s)), cls])
    summary.pop("load_histogram")
    summary["rho_edge"] = list(rho.edge)
    _emit(summary, args.out)
    return EXIT_OK


def cmd_mix(args):
    g = read_graph(args.inp)
    if not 0.0 <= args.lazy < 1.0:
        raise ConfigError("--lazy must lie in [0, 1)")
    rho = None
    if not args.no_paths:
        ps = build_canonical(g, args.weights, _alpha(args), args.seed, pairs=args.pairs)
        rho = cn.compute_rho(g, ps)
    m = mixing_section(g, rho, args.delta, args.lazy, tau=True, gap=True, seed=args.seed)
    _emit({
        "n": g.n, "d": g.d, "c": g.c, "seed": g.seed, "lazy": args.lazy, "delta": m["delta"],
        "tau": m["tau"], "tau_mode": m["tau_mode"], "gap": m["gap"],
        "rho": None if rho is None else rho.value, "rho_mode": None if rho is None else rho.mode,
        "bound": m["bound"], "bound_raw": m["bound_raw"], "bound_satisfied": m["bound_satisfied"],
    }, args.out)
    return EXIT_OK


def cmd_experiment(args):
    cfg = ExperimentConfig.load(args.config)
    if args.workers:
        cfg = replace(cfg, workers=args.workers)
    result = run_ensemble(cfg)
    print(f"{len(result.records)} records, {result.failures} failed, written to {result.out}")
    return EXIT_FAILED if result.failures else EXIT_OK


def cmd_plot(args):
    records = load_records(args.inp)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        paths = emit_plots(records, args.out or args.inp)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="gtgmix", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a graph and write it to a file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--c", type=_auto_or_float, default=None, help="threshold constant or 'auto'")
    _weight_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="structural report for a graph file")
    p.add_argument("--in", dest="inp", required=True)
    _weight_args(p)
    p.add_argument("--out", help="JSON output file (default stdout)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("paths", help="canonical paths and congestion")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--mode", choices=["auto", "exact", "sampled"], default="auto")
    p.add_argument("--pairs", type=int, default=cn.DEFAULT_PAIRS, help="pair budget when sampling")
    _weight_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="per-edge statistics CSV")
    p.add_argument("--out", help="summary JSON file (default stdout)")
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("mix", help="mixing time, spectral gap and congestion bound")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--delta", type=_auto_or_float, default=None, help="TV target or 'auto' (1/n)")
    p.add_argument("--lazy", type=float, default=0.5, help="holding probability (default 0.5)")
    p.add_argument("--pairs", type=int, default=cn.DEFAULT_PAIRS)
    p.add_argument("--no-paths", action="store_true", help="skip the congestion bound")
    _weight_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("experiment", help="run an ensemble from a key=value config file")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=0, help="override the config's worker count")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plot", help="SVG plots from an experiment directory")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", help="plot directory (default: the experiment directory)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GraphFormatError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (cn.RepresentativeError, cn.PathBuildError, mx.MixingTimeout) as exc:
        print(f"instance failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
