from __future__ import annotations

import argparse
import logging
import os

import numpy as np

from ngf.errors import ConfigError
from ngf.models.experiment import GenGraphConfig
from ngf.models.filter import FilterSpec
from ngf.models.graph import GsoChoice
from ngf.services.experiments import build_graph
from ngf.services.filters import build_classical, build_ngf, format_dense, parse_coeffs, read_coeffs
from ngf.services.graph_core import khop_stack, read_edge_list, write_edge_list
from ngf.utils.config import describe_keys, load_config
from ngf.utils.io import atomic_write_text

log = logging.getLogger(__name__)


# ---------- Handlers ----------
def gen_graph(args: argparse.Namespace) -> int:
    cfg = load_config(
        GenGraphConfig,
        args.config,
        args.overrides,
        seed=args.seed,
        **{"graph.family": args.family, "graph.connected": args.connected},
    )
    g = build_graph(cfg.graph, cfg.seed)
    write_edge_list(g, args.out)
    if cfg.graph.family == "sbm":
        size = cfg.graph.n // cfg.graph.communities
        labels = np.repeat(np.arange(cfg.graph.communities), size)
        atomic_write_text(f"{args.out}.labels", "".join(f"{c}\n" for c in labels.tolist()))
    log.info("wrote %s graph n=%d edges=%d to %s", cfg.graph.family, g.n, g.num_edges, args.out)
    return 0


def khop(args: argparse.Namespace) -> int:
    if args.kmax < 0:
        raise ConfigError(f"--kmax must be >= 0, got {args.kmax}")
    g = read_edge_list(args.graph)
    stack = khop_stack(g, args.kmax)
    written = min(args.kmax, stack.diameter) + 1
    lines = ["k,i,j"]
    for k in range(written):
        i, j = np.nonzero(stack.matrix(k))
        lines.extend(f"{k},{a},{b}" for a, b in zip(i.tolist(), j.tolist()))
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"diameter={stack.diameter}")
    print(f"matrices={written}")
    return 0


def build_filter(args: argparse.Namespace) -> int:
    g = read_edge_list(args.graph)
    coeffs = read_coeffs(args.coeffs) if os.path.isfile(args.coeffs) else parse_coeffs(args.coeffs)
    if args.kind == "classical":
        spec = FilterSpec(kind="classical", coeffs=coeffs.tolist(),
                          gso=GsoChoice(kind=args.gso, normalize=args.normalize))
        f = build_classical(g, spec)
    else:
        f = build_ngf(khop_stack(g, len(coeffs) - 1), coeffs)
    atomic_write_text(args.out, format_dense(f.m))
    log.info("wrote %s filter with %d taps on n=%d to %s", args.kind, len(coeffs), g.n, args.out)
    return 0


# ---------- Registration ----------
def register(subparsers) -> None:
    keys = "\n".join(f"  {k} = {v!r}" for k, v in describe_keys(GenGraphConfig()))
    p = subparsers.add_parser(
        "gen-graph",
        help="sample a random graph and write it as an edge list",
        epilog=f"config keys (defaults):\n{keys}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--family", choices=["er", "sbm", "small-world"])
    p.add_argument("--config", help="TOML file with `seed` and a [graph] section")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. graph.p=0.2")
    p.add_argument("--seed", type=int)
    p.add_argument("--connected", action=argparse.BooleanOptionalAction, default=None,
                   help="resample until the graph is connected")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=gen_graph)

    p = subparsers.add_parser("khop", help="write the k-hop adjacency matrices of a graph")
    p.add_argument("--graph", required=True, help="edge-list file")
    p.add_argument("--kmax", type=int, required=True)
    p.add_argument("--out", required=True, help="CSV of (k, i, j) for every nonzero entry")
    p.set_defaults(handler=khop)

    p = subparsers.add_parser("build-filter", help="build a dense filter matrix")
    p.add_argument("--graph", required=True, help="edge-list file")
    p.add_argument("--kind", choices=["classical", "neighborhood"], required=True)
    p.add_argument("--coeffs", required=True, help="coefficient file or inline list such as 0.5,0.3,0.2")
    p.add_argument("--gso", choices=["adjacency", "laplacian"], default="adjacency")
    p.add_argument("--normalize", action="store_true", help="divide the GSO by its spectral radius")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=build_filter)
