from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from ngf.errors import FilterError
from ngf.models.graph import GsoChoice


class FilterSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["classical", "neighborhood"]
    coeffs: List[float]
    # only read for classical filters
    gso: GsoChoice = GsoChoice()

    @field_validator("coeffs")
    @classmethod
    def finite_taps(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("at least one filter tap is required")
        if not all(math.isfinite(c) for c in v):
            raise ValueError("filter coefficients must be finite")
        return v

    @property
    def taps(self) -> int:
        return len(self.coeffs)


@dataclass(frozen=True)
class FilterMatrix:
    m: np.ndarray
    spec: FilterSpec
    # free-form note about the graph the filter was built on
    graph: Optional[str] = None

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"filter matrix must be square, got shape {m.shape}")
        if not np.isfinite(m).all():
            raise FilterError("filter matrix has non-finite entries")
        m.flags.writeable = False
        object.__setattr__(self, "m", m)

    @property
    def n(self) -> int:
        return self.m.shape[0]
