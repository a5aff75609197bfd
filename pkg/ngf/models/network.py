from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ngf.models.graph import GsoChoice

Operator = Literal["adjacency", "classical", "neighborhood"]
Activation = Literal["relu", "tanh", "identity"]
Head = Literal["identity", "softmax"]
LossKind = Literal["mse", "cross_entropy"]
Optimizer = Literal["gd", "adam"]


# ---------- Schemas ----------
class LayerSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    operator: Operator = "neighborhood"
    taps: int = Field(2, ge=1)
    coeff_mode: Literal["fixed", "learnable"] = "learnable"
    # prior for fixed layers and starting point otherwise; 1/K each when omitted
    coeffs: Optional[List[float]] = None
    gso: GsoChoice = GsoChoice()
    scaling: Literal["none", "spectral"] = "none"

    @model_validator(mode="before")
    @classmethod
    def adjacency_is_one_tap(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("operator") == "adjacency":
            data = {**data, "taps": 1, "coeff_mode": "fixed", "coeffs": [1.0]}
        return data

    @model_validator(mode="after")
    def coeffs_match_taps(self) -> "LayerSpec":
        if self.coeffs is not None and len(self.coeffs) != self.taps:
            raise ValueError(f"{len(self.coeffs)} coefficients given for {self.taps} taps")
        return self

    @property
    def learnable(self) -> bool:
        return self.coeff_mode == "learnable"

    def initial_coeffs(self) -> np.ndarray:
        if self.coeffs is not None:
            return np.array(self.coeffs, dtype=np.float64)
        return np.full(self.taps, 1.0 / self.taps)


class NetworkSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    feature_dims: List[int]
    layers: List[LayerSpec]
    activation: Activation = "relu"
    head: Head = "identity"
    # "zeros" starts the last layer at a zero output
    output_init: Literal["glorot", "zeros"] = "glorot"

    @model_validator(mode="after")
    def dims_match_layers(self) -> "NetworkSpec":
        if not self.layers:
            raise ValueError("at least one layer is required")
        if len(self.feature_dims) != len(self.layers) + 1:
            raise ValueError(
                f"feature_dims needs {len(self.layers) + 1} entries for {len(self.layers)} layers"
            )
        if any(f < 1 for f in self.feature_dims):
            raise ValueError("feature dimensions must be positive")
        return self

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @classmethod
    def uniform(cls, feature_dims: List[int], layer: LayerSpec, **kw) -> "NetworkSpec":
        return cls(feature_dims=feature_dims, layers=[layer] * (len(feature_dims) - 1), **kw)


class Checkpoint(BaseModel):
    version: Literal[1] = 1
    spec: NetworkSpec
    thetas: List[List[List[float]]]
    coeffs: List[List[float]]


# ---------- Runtime state ----------
@dataclass
class FilterBasis:
    """Stack B_0..B_{K-1} with H = sum_k h_k B_k."""

    mats: np.ndarray
    _last: Dict[bytes, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def taps(self) -> int:
        return self.mats.shape[0]

    @property
    def n(self) -> int:
        return self.mats.shape[1]

    def combine(self, h: np.ndarray) -> np.ndarray:
        key = np.asarray(h, dtype=np.float64).tobytes()
        hit = self._last.get(key)
        if hit is None:
            hit = np.tensordot(h, self.mats, axes=1)
            self._last.clear()
            self._last[key] = hit
        return hit


@dataclass
class LayerCache:
    x_in: np.ndarray
    q: np.ndarray
    h: np.ndarray
    u: np.ndarray
    x_out: np.ndarray


@dataclass
class NetworkState:
    thetas: List[np.ndarray]
    coeffs: List[np.ndarray]
    cache: Optional[List[LayerCache]] = field(default=None, repr=False)

    def is_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.thetas) and all(
            np.isfinite(c).all() for c in self.coeffs
        )

    def copy(self) -> "NetworkState":
        return NetworkState([t.copy() for t in self.thetas], [c.copy() for c in self.coeffs])


@dataclass
class Gradients:
    thetas: List[np.ndarray]
    # None for layers whose coefficients are fixed
    coeffs: List[Optional[np.ndarray]]


@dataclass
class TrainResult:
    state: NetworkState
    losses: List[float]
    stopped_epoch: int
