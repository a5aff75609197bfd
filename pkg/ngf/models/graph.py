from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Literal, Optional

import networkx as nx
import numpy as np
import scipy.sparse as sps
from pydantic import BaseModel, ConfigDict

UNREACHABLE = -1


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes 0..n-1.

    `edges` is an (m, 2) array of pairs with i < j in lexicographic order and
    `weights` the matching (m,) array. Use `Graph.from_edges` to build one from
    arbitrary pairs.
    """

    n: int
    edges: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"node count must be positive, got {self.n}")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(weights) != len(edges):
            raise ValueError("one weight per edge required")
        if len(edges):
            if edges.min() < 0 or edges.max() >= self.n:
                raise ValueError(f"edge endpoint outside [0, {self.n})")
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise ValueError("edges must be stored as i < j (no self-loops)")
            keys = edges[:, 0] * self.n + edges[:, 1]
            if np.any(np.diff(keys) <= 0):
                raise ValueError("edges must be sorted and unique")
        object.__setattr__(self, "edges", _readonly(edges))
        object.__setattr__(self, "weights", _readonly(weights))

    # ---------- Construction ----------
    @classmethod
    def from_edges(
        cls,
        n: int,
        pairs: Iterable[Iterable[int]] | np.ndarray,
        weights: Optional[Iterable[float]] = None,
    ) -> "Graph":
        """Normalize unordered pairs to i < j and sort them. Self-loops and duplicates are rejected."""
        arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=np.int64)
        arr = arr.reshape(-1, 2)
        w = np.ones(len(arr)) if weights is None else np.asarray(list(weights), dtype=np.float64)
        if len(w) != len(arr):
            raise ValueError("one weight per edge required")
        if np.any(arr[:, 0] == arr[:, 1]):
            raise ValueError("self-loops are not allowed")
        lo = np.minimum(arr[:, 0], arr[:, 1])
        hi = np.maximum(arr[:, 0], arr[:, 1])
        order = np.lexsort((hi, lo))
        lo, hi, w = lo[order], hi[order], w[order]
        if len(lo) > 1:
            dup = (np.diff(lo) == 0) & (np.diff(hi) == 0)
            if dup.any():
                k = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate edge ({lo[k]}, {hi[k]})")
        return cls(n=n, edges=np.stack([lo, hi], axis=1), weights=w)

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(n=n, edges=np.empty((0, 2), dtype=np.int64), weights=np.empty(0))

    @classmethod
    def from_networkx(cls, g: nx.Graph, weight: str = "weight") -> "Graph":
        if g.is_directed():
            raise ValueError("directed graphs are not supported")
        if set(g.nodes) != set(range(g.number_of_nodes())):
            g = nx.convert_node_labels_to_integers(g, ordering="sorted")
        pairs, ws = [], []
        for u, v, data in g.edges(data=True):
            if u == v:
                continue
            pairs.append((u, v))
            ws.append(float(data.get(weight, 1.0)))
        return cls.from_edges(g.number_of_nodes(), pairs, ws)

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        for (i, j), w in zip(self.edges.tolist(), self.weights.tolist()):
            g.add_edge(i, j, weight=w)
        return g

    # ---------- Views ----------
    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def is_weighted(self) -> bool:
        return bool(np.any(self.weights != 1.0))

    def edge_keys(self) -> np.ndarray:
        return self.edges[:, 0] * self.n + self.edges[:, 1]

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        i, j = self.edges[:, 0], self.edges[:, 1]
        a[i, j] = self.weights
        a[j, i] = self.weights
        return a

    def binary_adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        i, j = self.edges[:, 0], self.edges[:, 1]
        a[i, j] = 1.0
        a[j, i] = 1.0
        return a

    def to_csr(self) -> sps.csr_matrix:
        """Binarized adjacency in CSR form (both directions stored)."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        data = np.ones(len(rows), dtype=np.int8)
        return sps.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)


@dataclass(frozen=True)
class DistanceMatrix:
    """Hop counts; UNREACHABLE (-1) marks pairs in different components."""

    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", _readonly(np.asarray(self.d, dtype=np.int32)))

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def diameter(self) -> int:
        finite = self.d[self.d != UNREACHABLE]
        return int(finite.max()) if finite.size else 0


@dataclass(frozen=True)
class KHopStack:
    """k-hop adjacency matrices A_N(0..k_max), bit-packed along rows.

    `packed[k]` is `np.packbits(d == k, axis=1)`; unpack with `matrix(k)`.
    """

    n: int
    packed: np.ndarray
    diameter: int
    components: np.ndarray
    distances: DistanceMatrix = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "packed", _readonly(self.packed))
        object.__setattr__(self, "components", _readonly(np.asarray(self.components)))

    def __len__(self) -> int:
        return self.packed.shape[0]

    @property
    def k_max(self) -> int:
        return len(self) - 1

    def matrix(self, k: int, dtype=np.float64) -> np.ndarray:
        if not 0 <= k < len(self):
            raise IndexError(f"k={k} outside stack of {len(self)} matrices")
        return np.unpackbits(self.packed[k], axis=1, count=self.n).astype(dtype)

    @property
    def mats(self) -> List[np.ndarray]:
        return [self.matrix(k) for k in range(len(self))]


class GsoChoice(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["adjacency", "laplacian"] = "adjacency"
    # divide by the largest-magnitude eigenvalue
    normalize: bool = False
