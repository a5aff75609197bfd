"""Citation-network ingestion (LINQS content/cites text files), splits, and graph metrics."""

from __future__ import annotations

import dataclasses
import logging
import os
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, shortest_path

from ngf.errors import DatasetError, GraphError
from ngf.models.dataset import CitationDataset, GraphMetrics, LoadReport, Split
from ngf.models.graph import Graph
from ngf.services.graph_core import (
    connected_components,
    derive_seed,
    generate_dcsbm,
    generate_sbm,
    induced_subgraph,
)
from ngf.utils.io import atomic_write_text

log = logging.getLogger(__name__)

_ECC_CHUNK = 256


# ---------- Loading ----------
def _split_fields(line: str) -> List[str]:
    return line.split("\t") if "\t" in line else line.split()


def _read_content(path) -> Tuple[List[str], List[List[float]], List[str]]:
    ids: List[str] = []
    rows: List[List[float]] = []
    raw_labels: List[str] = []
    seen: Dict[str, int] = {}
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            parts = [p.strip() for p in _split_fields(line)]
            if len(parts) < 3:
                raise DatasetError("expected 'id<TAB>features...<TAB>class'", str(path), lineno)
            node_id, feats, label = parts[0], parts[1:-1], parts[-1]
            if width is None:
                width = len(feats)
            elif len(feats) != width:
                raise DatasetError(
                    f"inconsistent feature width {len(feats)} (expected {width})", str(path), lineno
                )
            try:
                values = [float(v) for v in feats]
            except ValueError as exc:
                raise DatasetError(f"non-numeric feature: {exc}", str(path), lineno) from exc
            if node_id in seen:
                raise DatasetError(f"duplicate node id {node_id!r}", str(path), lineno)
            seen[node_id] = len(ids)
            ids.append(node_id)
            rows.append(values)
            raw_labels.append(label)
    if not ids:
        raise DatasetError("no nodes found", str(path))
    return ids, rows, raw_labels


def load_citation(
    content_path: str | os.PathLike,
    cites_path: str | os.PathLike,
    binarize: bool = True,
) -> Tuple[CitationDataset, LoadReport]:
    """Parse a content/cites pair into a dataset with dense 0-based node ids.

    Citations naming unknown ids are dropped and counted; so are self-citations.
    Edges are symmetrized and de-duplicated.
    """
    for p in (content_path, cites_path):
        if not os.path.exists(p):
            raise DatasetError("file not found", str(p))

    # 1) nodes, features, labels
    ids, rows, raw_labels = _read_content(content_path)
    index = {node_id: i for i, node_id in enumerate(ids)}
    class_names = sorted(set(raw_labels))
    class_index = {name: k for k, name in enumerate(class_names)}
    labels = np.array([class_index[c] for c in raw_labels], dtype=np.int64)
    features = np.array(rows, dtype=np.float64)
    if binarize:
        features = (features > 0).astype(np.float64)

    # 2) citations
    keys = set()
    unknown = self_loops = duplicates = 0
    with open(cites_path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetError("expected 'cited<TAB>citing'", str(cites_path), lineno)
            a, b = index.get(parts[0]), index.get(parts[1])
            if a is None or b is None:
                unknown += 1
                continue
            if a == b:
                self_loops += 1
                continue
            key = (min(a, b), max(a, b))
            if key in keys:
                duplicates += 1
                continue
            keys.add(key)

    graph = Graph.from_edges(len(ids), sorted(keys))
    sizes = np.sort(np.bincount(connected_components(graph)))[::-1]
    report = LoadReport(
        nodes=graph.n,
        features=features.shape[1],
        classes=len(class_names),
        edges=graph.num_edges,
        dropped_unknown=unknown,
        dropped_self_loops=self_loops,
        duplicate_edges=duplicates,
        component_sizes=sizes[:5].tolist(),
    )
    if unknown:
        log.warning("dropped %d citations referencing unknown ids", unknown)
    log.info("loaded %s: n=%d F=%d M=%d edges=%d", content_path, graph.n, report.features,
             report.classes, graph.num_edges)
    dataset = CitationDataset(graph, features, labels, class_names, ids)
    return dataset, report


def write_citation(
    dataset: CitationDataset, content_path: str | os.PathLike, cites_path: str | os.PathLike
) -> None:
    integral = bool(np.all(dataset.features == np.round(dataset.features)))
    fmt = (lambda v: str(int(v))) if integral else repr
    content = []
    for node_id, row, label in zip(dataset.node_ids, dataset.features.tolist(), dataset.labels.tolist()):
        content.append("\t".join([node_id, *(fmt(v) for v in row), dataset.class_names[label]]))
    cites = [f"{dataset.node_ids[i]}\t{dataset.node_ids[j]}" for i, j in dataset.graph.edges.tolist()]
    atomic_write_text(content_path, "\n".join(content) + "\n")
    atomic_write_text(cites_path, "\n".join(cites) + ("\n" if cites else ""))


# ---------- Restriction & synthetic data ----------
def _subset(dataset: CitationDataset, nodes: np.ndarray) -> CitationDataset:
    return CitationDataset(
        graph=induced_subgraph(dataset.graph, nodes),
        features=dataset.features[nodes],
        labels=dataset.labels[nodes],
        class_names=dataset.class_names,
        node_ids=[dataset.node_ids[i] for i in nodes.tolist()],
    )


def largest_component(dataset: CitationDataset, max_nodes: Optional[int] = None) -> CitationDataset:
    """Restrict to the largest connected component, optionally capped by a BFS ball."""
    g = dataset.graph
    labels = connected_components(g)
    nodes = np.flatnonzero(labels == np.argmax(np.bincount(labels)))
    if max_nodes is not None and len(nodes) > max_nodes:
        degrees = g.degrees()
        root = int(nodes[np.argmax(degrees[nodes])])
        order = breadth_first_order(g.to_csr(), root, directed=False, return_predecessors=False)
        nodes = np.sort(order[:max_nodes])
    return _subset(dataset, nodes)


def synthetic_citation(
    n: int,
    communities: int,
    p_in: float,
    p_out: float,
    feature_dim: int,
    signal: float,
    rng_seed: int,
    degree_tail: Optional[float] = None,
) -> CitationDataset:
    """SBM graph whose communities are the classes; features are a noisy one-hot of the class.

    With `degree_tail` the graph is degree-corrected (see `generate_dcsbm`), giving the
    hub-dominated degree profile of real citation graphs.
    """
    if feature_dim < communities:
        raise DatasetError(f"feature_dim={feature_dim} must be >= communities={communities}")
    if degree_tail is None:
        graph, labels = generate_sbm(n, communities, p_in, p_out, derive_seed(rng_seed, 0))
    else:
        graph, labels = generate_dcsbm(n, communities, p_in, p_out, degree_tail, derive_seed(rng_seed, 0))
    rng = np.random.default_rng(derive_seed(rng_seed, 1))
    features = rng.standard_normal((n, feature_dim))
    features[np.arange(n), labels] += signal
    width = len(str(communities - 1))
    names = [f"community_{k:0{width}d}" for k in range(communities)]
    return CitationDataset(graph, features, labels, names, [str(i) for i in range(n)])


# ---------- Splits ----------
def make_split(
    n: int,
    train_per_class: int,
    val_count: int,
    test_count: int,
    labels: np.ndarray,
    rng_seed: int,
) -> Split:
    labels = np.asarray(labels)
    if len(labels) != n:
        raise DatasetError(f"{len(labels)} labels for {n} nodes")
    if min(train_per_class, val_count, test_count) < 0:
        raise DatasetError("split counts must be non-negative")
    rng = np.random.default_rng(rng_seed)

    train: List[int] = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if len(members) < train_per_class:
            raise DatasetError(
                f"class {c} has {len(members)} nodes, fewer than {train_per_class} requested for training"
            )
        train.extend(rng.permutation(members)[:train_per_class].tolist())

    rest = rng.permutation(np.setdiff1d(np.arange(n), train))
    if val_count + test_count > len(rest):
        raise DatasetError(
            f"{val_count} validation + {test_count} test nodes requested, only {len(rest)} left"
        )
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    masks[0][train] = True
    masks[1][rest[:val_count]] = True
    masks[2][rest[val_count:val_count + test_count]] = True
    return Split(*masks)


def with_split(dataset: CitationDataset, split: Split) -> CitationDataset:
    return dataclasses.replace(dataset, split=split)


# ---------- Metrics ----------
def graph_metrics(g: Graph) -> GraphMetrics:
    """Radius and diameter of the largest connected component (eccentricity based)."""
    if g.num_edges == 0:
        raise GraphError("graph metrics need a graph with at least one edge")
    labels = connected_components(g)
    sizes = np.bincount(labels)
    nodes = np.flatnonzero(labels == np.argmax(sizes))
    sub = induced_subgraph(g, nodes).to_csr()
    ecc = np.empty(len(nodes), dtype=np.int64)
    for start in range(0, len(nodes), _ECC_CHUNK):
        idx = np.arange(start, min(start + _ECC_CHUNK, len(nodes)))
        d = shortest_path(sub, method="D", directed=False, unweighted=True, indices=idx)
        ecc[idx] = d.max(axis=1).astype(np.int64)
    return GraphMetrics(
        radius=int(ecc.min()),
        diameter=int(ecc.max()),
        largest_cc_size=len(nodes),
        components=len(sizes),
    )
