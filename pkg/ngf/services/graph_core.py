"""Graphs: random generators, hop distances, k-hop adjacency stacks, GSOs, perturbation."""

from __future__ import annotations

import logging
import math
import os
from pathlib import Path
from typing import Callable, Optional, Tuple

import networkx as nx
import numpy as np
from scipy.sparse.csgraph import connected_components as _cc
from scipy.sparse.csgraph import shortest_path

from ngf.errors import ConvergenceError, GraphError
from ngf.models.graph import UNREACHABLE, DistanceMatrix, Graph, GsoChoice, KHopStack
from ngf.utils.io import atomic_write_text

log = logging.getLogger(__name__)

POWER_TOL = 1e-9
POWER_MAX_ITER = 10_000
# pair spaces up to this size are enumerated when sampling non-edges
_ENUMERATE_PAIRS = 4_000_000


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed for (seed, keys...)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# ---------- Generators ----------
def generate_er(n: int, p: float, rng_seed: int) -> Graph:
    if n < 1:
        raise GraphError(f"n must be >= 1, got {n}")
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"edge probability must be in [0, 1], got {p}")
    return Graph.from_networkx(nx.gnp_random_graph(n, p, seed=int(rng_seed)))


def generate_sbm(
    n: int, communities: int, p_in: float, p_out: float, rng_seed: int
) -> Tuple[Graph, np.ndarray]:
    """Equally-sized communities; returns the graph and the per-node community label."""
    if communities < 1 or n < 1:
        raise GraphError("n and communities must be positive")
    if n % communities:
        raise GraphError(f"n={n} is not divisible into {communities} equally-sized communities")
    for name, v in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= v <= 1.0:
            raise GraphError(f"{name} must be in [0, 1], got {v}")
    size = n // communities
    probs = [[p_in if a == b else p_out for b in range(communities)] for a in range(communities)]
    g = nx.stochastic_block_model([size] * communities, probs, seed=int(rng_seed))
    labels = np.repeat(np.arange(communities), size)
    return Graph.from_networkx(g), labels


def generate_dcsbm(
    n: int, communities: int, p_in: float, p_out: float, degree_tail: float, rng_seed: int
) -> Tuple[Graph, np.ndarray]:
    """Degree-corrected SBM: P(i ~ j) = min(1, theta_i * theta_j * p(c_i, c_j)).

    theta is Pareto with tail index `degree_tail`, shifted to start at 1 and
    rescaled to mean 1, so expected degrees match the plain SBM while a few
    nodes become hubs.
    """
    if communities < 1 or n < 1:
        raise GraphError("n and communities must be positive")
    if n % communities:
        raise GraphError(f"n={n} is not divisible into {communities} equally-sized communities")
    for name, v in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= v <= 1.0:
            raise GraphError(f"{name} must be in [0, 1], got {v}")
    if degree_tail <= 1.0:
        raise GraphError(f"degree_tail must exceed 1 for a finite mean degree, got {degree_tail}")
    rng = np.random.default_rng(rng_seed)
    theta = 1.0 + rng.pareto(degree_tail, size=n)
    theta /= theta.mean()
    labels = np.repeat(np.arange(communities), n // communities)
    rows, cols = [], []
    for i in range(n - 1):
        j = np.arange(i + 1, n)
        p = np.minimum(1.0, theta[i] * theta[j] * np.where(labels[j] == labels[i], p_in, p_out))
        hit = j[rng.random(len(j)) < p]
        rows.append(np.full(len(hit), i))
        cols.append(hit)
    if rows:
        edges = np.stack([np.concatenate(rows), np.concatenate(cols)], axis=1)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    return Graph(n=n, edges=edges, weights=np.ones(len(edges))), labels


def generate_small_world(n: int, k_ring: int, beta: float, rng_seed: int) -> Graph:
    """Watts-Strogatz: ring lattice with k_ring nearest neighbours, each edge rewired with prob. beta."""
    if k_ring % 2:
        raise GraphError(f"k_ring must be even, got {k_ring}")
    if not 0 <= k_ring < n:
        raise GraphError(f"k_ring must satisfy 0 <= k_ring < n, got {k_ring} (n={n})")
    if not 0.0 <= beta <= 1.0:
        raise GraphError(f"rewire probability must be in [0, 1], got {beta}")
    return Graph.from_networkx(nx.watts_strogatz_graph(n, k_ring, beta, seed=int(rng_seed)))


def sample_connected(
    factory: Callable[[int], Graph], rng_seed: int, max_attempts: int = 1000
) -> Graph:
    for attempt in range(max_attempts):
        g = factory(derive_seed(rng_seed, attempt))
        if is_connected(g):
            if attempt:
                log.debug("connected sample after %d resamples", attempt)
            return g
    raise GraphError(f"no connected sample in {max_attempts} attempts")


# ---------- Connectivity & distances ----------
def connected_components(g: Graph) -> np.ndarray:
    # scipy numbers components in order of their smallest node
    _, labels = _cc(g.to_csr(), directed=False)
    return labels.astype(np.int64)


def is_connected(g: Graph) -> bool:
    n_comp, _ = _cc(g.to_csr(), directed=False)
    return n_comp == 1


def bfs_distances(g: Graph) -> DistanceMatrix:
    """All-pairs hop counts on the binarized graph (edge weights are ignored)."""
    dist = shortest_path(g.to_csr(), method="D", directed=False, unweighted=True)
    d = np.full(dist.shape, UNREACHABLE, dtype=np.int32)
    finite = np.isfinite(dist)
    d[finite] = dist[finite].astype(np.int32)
    return DistanceMatrix(d)


def khop_stack(g: Graph, k_max: int) -> KHopStack:
    if k_max < 0:
        raise GraphError(f"k_max must be >= 0, got {k_max}")
    dist = bfs_distances(g)
    packed = np.empty((k_max + 1, g.n, (g.n + 7) // 8), dtype=np.uint8)
    for k in range(k_max + 1):
        packed[k] = np.packbits(dist.d == k, axis=1)
    return KHopStack(
        n=g.n,
        packed=packed,
        diameter=dist.diameter,
        components=connected_components(g),
        distances=dist,
    )


def induced_subgraph(g: Graph, nodes) -> Graph:
    nodes = np.asarray(nodes, dtype=np.int64)
    index = np.full(g.n, -1, dtype=np.int64)
    index[nodes] = np.arange(len(nodes))
    i, j = index[g.edges[:, 0]], index[g.edges[:, 1]]
    keep = (i >= 0) & (j >= 0)
    return Graph.from_edges(len(nodes), np.stack([i[keep], j[keep]], axis=1), g.weights[keep])


# ---------- Perturbation ----------
def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _sample_non_edges(g: Graph, count: int, rng: np.random.Generator) -> np.ndarray:
    n = g.n
    if count == 0:
        return np.empty((0, 2), dtype=np.int64)
    existing = g.edge_keys()
    total = n * (n - 1) // 2
    if total <= _ENUMERATE_PAIRS:
        i, j = np.triu_indices(n, k=1)
        keys = np.setdiff1d(i * n + j, existing, assume_unique=True)
        picked = keys[rng.choice(len(keys), size=count, replace=False)]
    else:
        # rejection sampling keeps the draw uniform over the remaining non-edges
        seen = set(existing.tolist())
        out = []
        while len(out) < count:
            for a, b in rng.integers(0, n, size=(2 * (count - len(out)) + 16, 2)).tolist():
                if a == b:
                    continue
                key = min(a, b) * n + max(a, b)
                if key in seen:
                    continue
                seen.add(key)
                out.append(key)
                if len(out) == count:
                    break
        picked = np.asarray(out, dtype=np.int64)
    return np.stack([picked // n, picked % n], axis=1)


def perturb(g: Graph, create_pct: float, destroy_pct: float, rng_seed: int) -> Graph:
    """Remove round(destroy_pct*|E|) edges and add round(create_pct*|E|) former non-edges.

    Both counts are taken relative to the edge count of `g`; added edges get weight 1.
    """
    for name, v in (("create_pct", create_pct), ("destroy_pct", destroy_pct)):
        if not 0.0 <= v <= 1.0:
            raise GraphError(f"{name} must be in [0, 1], got {v}")
    m = g.num_edges
    n_remove = _round_half_up(destroy_pct * m)
    n_add = _round_half_up(create_pct * m)
    available = g.n * (g.n - 1) // 2 - m
    if n_add > available:
        raise GraphError(f"cannot add {n_add} edges: only {available} non-edges available")
    if n_remove == 0 and n_add == 0:
        return g

    rng = np.random.default_rng(rng_seed)
    keep = np.ones(m, dtype=bool)
    if n_remove:
        keep[rng.choice(m, size=n_remove, replace=False)] = False
    added = _sample_non_edges(g, n_add, rng)
    edges = np.concatenate([g.edges[keep], added])
    weights = np.concatenate([g.weights[keep], np.ones(len(added))])
    return Graph.from_edges(g.n, edges, weights)


def sample_connected_perturbation(
    g: Graph, create_pct: float, destroy_pct: float, rng_seed: int, max_attempts: int = 1000
) -> Graph:
    return sample_connected(
        lambda s: perturb(g, create_pct, destroy_pct, s), rng_seed, max_attempts=max_attempts
    )


# ---------- Graph shift operators ----------
def spectral_radius(s: np.ndarray, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> float:
    """Largest |eigenvalue| of a symmetric matrix by power iteration on S^2.

    Iterating S^2 keeps +lambda and -lambda (bipartite graphs) from cycling.
    Stops when the Rayleigh quotient changes by less than tol relative.
    """
    n = s.shape[0]
    x = np.ones(n) + 1e-3 * np.cos(np.arange(n))
    x /= np.linalg.norm(x)
    mu = 0.0
    change = np.inf
    for it in range(1, max_iter + 1):
        y = s @ (s @ x)
        mu_new = float(x @ y)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            raise GraphError("spectral radius of a zero matrix is undefined")
        x = y / norm
        change = abs(mu_new - mu)
        if it > 1 and change <= tol * abs(mu_new):
            log.debug("power iteration converged in %d iterations", it)
            return math.sqrt(mu_new)
        mu = mu_new
    raise ConvergenceError("power iteration did not converge", residual=change, iterations=max_iter)


def gso(g: Graph, choice: GsoChoice) -> np.ndarray:
    a = g.adjacency()
    s = a if choice.kind == "adjacency" else np.diag(a.sum(axis=1)) - a
    if choice.normalize:
        if g.num_edges == 0:
            raise GraphError("cannot normalize the GSO of a graph without edges")
        s = s / spectral_radius(s)
    return s


# ---------- Edge-list text format ----------
def read_edge_list(path: str | os.PathLike, n: Optional[int] = None) -> Graph:
    pairs, weights = [], []
    header_n = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if body.lower().startswith("nodes:"):
                    header_n = int(body.split(":", 1)[1])
                continue
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise GraphError(f"{path}:{lineno}: expected 'i j [weight]', got {raw.rstrip()!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
                weights.append(float(parts[2]) if len(parts) == 3 else 1.0)
            except ValueError as exc:
                raise GraphError(f"{path}:{lineno}: {exc}") from exc
    if n is None:
        n = header_n
    if n is None:
        n = max((max(p) for p in pairs), default=-1) + 1
    try:
        return Graph.from_edges(max(n, 1), pairs, weights)
    except ValueError as exc:
        raise GraphError(f"{path}: {exc}") from exc


def format_edge_list(g: Graph) -> str:
    lines = [f"# nodes: {g.n}"]
    weighted = g.is_weighted
    for (i, j), w in zip(g.edges.tolist(), g.weights.tolist()):
        lines.append(f"{i} {j} {w!r}" if weighted else f"{i} {j}")
    return "\n".join(lines) + "\n"


def write_edge_list(g: Graph, path: str | os.PathLike) -> Path:
    return atomic_write_text(path, format_edge_list(g))
