from __future__ import annotations

import argparse

from ngf.errors import ConfigError
from ngf.services.datasets import graph_metrics, largest_component, load_citation
from ngf.utils.config import dataset_files, resolve_data_path


def dataset_info(args: argparse.Namespace) -> int:
    if args.dataset:
        if args.content or args.cites:
            raise ConfigError("use either --dataset or --content/--cites")
        content, cites = dataset_files(args.dataset)
    elif args.content and args.cites:
        content, cites = resolve_data_path(args.content), resolve_data_path(args.cites)
    else:
        raise ConfigError("dataset-info needs --dataset or both --content and --cites")

    dataset, report = load_citation(content, cites, binarize=not args.raw_features)
    for line in report.lines():
        print(line)
    metrics = graph_metrics(dataset.graph)
    for key, value in metrics.model_dump().items():
        print(f"{key}={value}")
    if args.max_nodes is not None:
        sub = largest_component(dataset, args.max_nodes)
        print(f"subsample_nodes={sub.graph.n}")
        print(f"subsample_edges={sub.graph.num_edges}")
    return 0


def register(subparsers) -> None:
    p = subparsers.add_parser(
        "dataset-info", help="load a citation dataset and print counts, radius and diameter"
    )
    p.add_argument("--dataset", help="name resolved under NGF_DATA_DIR (cora, citeseer, pubmed)")
    p.add_argument("--content")
    p.add_argument("--cites")
    p.add_argument("--raw-features", action="store_true", help="keep feature values as read")
    p.add_argument("--max-nodes", type=int, help="also report the capped largest-component subsample")
    p.set_defaults(handler=dataset_info)
