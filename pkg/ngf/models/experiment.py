from __future__ import annotations

import math
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ngf.models.graph import GsoChoice
from ngf.models.network import Activation, Operator, Optimizer

Variant = Literal["normalized", "raw"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------- Shared sections ----------
class GraphParams(_Section):
    family: Literal["er", "small-world", "sbm"] = "er"
    n: int = Field(64, ge=1)
    # Erdos-Renyi
    p: float = Field(0.15, ge=0.0, le=1.0)
    # small world
    k_ring: int = 4
    beta: float = Field(0.15, ge=0.0, le=1.0)
    # stochastic block model
    communities: int = Field(8, ge=1)
    p_in: float = Field(0.3, ge=0.0, le=1.0)
    p_out: float = Field(0.0075, ge=0.0, le=1.0)
    # resample until connected
    connected: bool = True
    max_resamples: int = Field(1000, ge=1)


class DatasetParams(_Section):
    source: Literal["citation", "synthetic"] = "synthetic"
    # citation: either a name resolved under NGF_DATA_DIR or explicit paths
    name: Optional[str] = None
    content: Optional[str] = None
    cites: Optional[str] = None
    binarize: bool = True
    largest_component: bool = False
    max_nodes: Optional[int] = None
    # synthetic SBM surrogate; degree_tail = None drops the degree correction
    n: int = 2100
    communities: int = 6
    p_in: float = 0.008
    p_out: float = 0.0005
    degree_tail: Optional[float] = Field(2.0, gt=1.0)
    feature_dim: int = 16
    signal: float = 1.0

    @model_validator(mode="after")
    def citation_needs_files(self) -> "DatasetParams":
        if self.source == "citation" and not self.name and not (self.content and self.cites):
            raise ValueError("citation datasets need `name` or both `content` and `cites`")
        return self


class SplitParams(_Section):
    # the common 20-per-class / 500 / 1000 convention
    train_per_class: int = Field(20, ge=0)
    val: int = Field(500, ge=0)
    test: int = Field(1000, ge=1)


class DenoiseNetwork(_Section):
    input_features: int = Field(64, ge=1)
    hidden_features: List[int] = [64]
    taps: int = Field(4, ge=1)
    coeff_mode: Literal["fixed", "learnable"] = "learnable"
    activation: Activation = "tanh"
    operator_variant: Variant = "normalized"
    output_init: Literal["glorot", "zeros"] = "zeros"


class ClassifyNetwork(_Section):
    hidden_features: List[int] = [32]
    coeff_mode: Literal["fixed", "learnable"] = "learnable"
    activation: Activation = "relu"


def _non_empty(name: str, v: list) -> list:
    if not v:
        raise ValueError(f"{name} must not be empty")
    return v


# ---------- Experiments ----------
class FilterErrorConfig(_Section):
    experiment: Literal["filter-error"] = "filter-error"
    seed: int = 0
    realizations: int = Field(100, ge=1)
    graph: GraphParams = GraphParams()
    taps: List[int] = [2, 3, 4, 5, 6, 7, 8]
    # unnormalized by default: the study is about instability
    gso: GsoChoice = GsoChoice()
    # deletions only unless creation is asked for
    create_pct: float = Field(0.0, ge=0.0, le=1.0)
    destroy_pct: float = Field(0.1, ge=0.0, le=1.0)
    coefficients: Literal["random", "constant"] = "random"
    connected_perturbation: bool = True

    @field_validator("taps")
    @classmethod
    def taps_positive(cls, v: List[int]) -> List[int]:
        _non_empty("taps", v)
        if min(v) < 1:
            raise ValueError("every K must be >= 1")
        return v


class DenoiseConfig(_Section):
    experiment: Literal["denoise"] = "denoise"
    seed: int = 0
    realizations: int = Field(50, ge=1)
    graph: GraphParams = GraphParams(family="sbm", n=256, communities=8, p_in=0.3, p_out=0.0075,
                                     connected=False)
    generators: List[Literal["classical", "neighborhood"]] = ["classical", "neighborhood"]
    generator_taps: int = Field(4, ge=1)
    generator_gso: GsoChoice = GsoChoice(normalize=True)
    noise_powers: List[float] = [0.1]
    architectures: List[Operator] = ["adjacency", "classical", "neighborhood"]
    network: DenoiseNetwork = DenoiseNetwork()
    epochs: int = Field(1000, ge=1)
    optimizer: Optimizer = "adam"
    step_size: float = Field(0.002, gt=0.0)
    per_epoch_records: bool = False

    @field_validator("generators", "noise_powers", "architectures")
    @classmethod
    def sweep_non_empty(cls, v, info):
        return _non_empty(info.field_name, v)

    @field_validator("noise_powers")
    @classmethod
    def noise_non_negative(cls, v: List[float]) -> List[float]:
        if any(p < 0 or not math.isfinite(p) for p in v):
            raise ValueError("noise powers must be finite and non-negative")
        return v


class ClassifyConfig(_Section):
    experiment: Literal["classify"] = "classify"
    seed: int = 0
    realizations: int = Field(1, ge=1)
    dataset: DatasetParams = DatasetParams()
    split: SplitParams = SplitParams()
    taps: List[int] = [2, 3, 4, 5, 6]
    kinds: List[Operator] = ["classical", "neighborhood"]
    operator_variants: List[Variant] = ["normalized", "raw"]
    network: ClassifyNetwork = ClassifyNetwork()
    epochs: int = Field(500, ge=1)
    optimizer: Optimizer = "gd"
    step_size: float = Field(0.05, gt=0.0)
    patience: int = Field(50, ge=1)

    @field_validator("taps", "kinds", "operator_variants")
    @classmethod
    def sweep_non_empty(cls, v, info):
        return _non_empty(info.field_name, v)


class PerturbClassifyConfig(ClassifyConfig):
    experiment: Literal["perturb-sweep"] = "perturb-sweep"
    taps: List[int] = [2, 4, 6]
    # fraction of |E| removed and the same fraction added
    perturbations: List[float] = [0.0, 0.1, 0.2, 0.3]

    @field_validator("perturbations")
    @classmethod
    def pct_range(cls, v: List[float]) -> List[float]:
        _non_empty("perturbations", v)
        if any(not 0.0 <= p <= 1.0 for p in v):
            raise ValueError("perturbation fractions must lie in [0, 1]")
        return v


class GenGraphConfig(_Section):
    seed: int = 0
    graph: GraphParams = GraphParams()


CONFIG_MODELS = {
    "filter-error": FilterErrorConfig,
    "denoise": DenoiseConfig,
    "classify": ClassifyConfig,
    "perturb-sweep": PerturbClassifyConfig,
    "gen-graph": GenGraphConfig,
}


# ---------- Records ----------
CSV_COLUMNS = ["experiment", "seed", "params", "metric", "epoch", "value"]


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


class RunRecord(BaseModel):
    experiment: str
    seed: int
    params: Dict[str, Any]
    metric: str
    epoch: Optional[int] = None
    # None together with diverged=True marks a run that blew up
    value: Optional[float] = None
    diverged: bool = False

    @model_validator(mode="after")
    def finite_or_diverged(self) -> "RunRecord":
        if self.diverged:
            self.value = None
        elif self.value is None or not math.isfinite(self.value):
            raise ValueError(f"metric {self.metric} must be finite unless marked diverged")
        return self

    @classmethod
    def of(cls, experiment: str, seed: int, params: Dict[str, Any], metric: str,
           value: Optional[float], epoch: Optional[int] = None) -> "RunRecord":
        """Non-finite or missing values become diverged records."""
        ok = value is not None and math.isfinite(value)
        return cls(experiment=experiment, seed=seed, params=params, metric=metric, epoch=epoch,
                   value=float(value) if ok else None, diverged=not ok)

    def row(self) -> Dict[str, str]:
        return {
            "experiment": self.experiment,
            "seed": str(self.seed),
            "params": ";".join(f"{k}={_fmt(v)}" for k, v in self.params.items()),
            "metric": self.metric,
            "epoch": "" if self.epoch is None else str(self.epoch),
            "value": "diverged" if self.diverged else repr(self.value),
        }
