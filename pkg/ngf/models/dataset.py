from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from pydantic import BaseModel

from ngf.models.graph import Graph


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            m = np.asarray(getattr(self, name), dtype=bool)
            m.flags.writeable = False
            object.__setattr__(self, name, m)
        if np.any(self.train & self.val) or np.any(self.train & self.test) or np.any(self.val & self.test):
            raise ValueError("train/val/test masks must be disjoint")


@dataclass(frozen=True)
class CitationDataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    class_names: List[str]
    # original identifiers, in node order
    node_ids: List[str]
    split: Optional[Split] = None

    def __post_init__(self):
        n = self.graph.n
        if self.features.shape[0] != n or len(self.labels) != n or len(self.node_ids) != n:
            raise ValueError("features, labels and node ids must align with the graph nodes")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("labels must lie in [0, M)")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]


class LoadReport(BaseModel):
    nodes: int
    features: int
    classes: int
    edges: int
    dropped_unknown: int = 0
    dropped_self_loops: int = 0
    duplicate_edges: int = 0
    component_sizes: List[int] = []

    def lines(self) -> List[str]:
        out = []
        for k, v in self.model_dump().items():
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            out.append(f"{k}={v}")
        return out


class GraphMetrics(BaseModel):
    radius: int
    diameter: int
    largest_cc_size: int
    components: int
