"""Classical polynomial graph filters and neighborhood graph filters."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Sequence

import numpy as np

from ngf.errors import FilterError, FilterOverflowError
from ngf.models.filter import FilterMatrix, FilterSpec
from ngf.models.graph import Graph, KHopStack
from ngf.services.graph_core import gso
from ngf.utils.io import atomic_write_text


def _describe(g: Graph) -> str:
    return f"n={g.n},m={g.num_edges}"


# ---------- Construction ----------
def horner(s: np.ndarray, coeffs: Sequence[float]) -> np.ndarray:
    """sum_k h_k S^k as S(...(S h_{K-1} + h_{K-2} I)...) + h_0 I."""
    n = s.shape[0]
    eye = np.eye(n)
    K = len(coeffs)
    h = coeffs[K - 1] * eye
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K - 2, -1, -1):
            h = s @ h + coeffs[k] * eye
            if not np.isfinite(h).all():
                raise FilterOverflowError(power=K - 1 - k)
    return h


def build_classical(g: Graph, spec: FilterSpec) -> FilterMatrix:
    if spec.kind != "classical":
        raise FilterError(f"build_classical needs a classical spec, got {spec.kind}")
    return FilterMatrix(horner(gso(g, spec.gso), spec.coeffs), spec, _describe(g))


def build_ngf(stack: KHopStack, h: Sequence[float]) -> FilterMatrix:
    h = [float(c) for c in h]
    if not h:
        raise FilterError("at least one filter tap is required")
    if len(h) > len(stack):
        raise FilterError(f"{len(h)} taps requested but the stack holds {len(stack)} matrices")
    m = np.zeros((stack.n, stack.n))
    # A_N(k) vanishes beyond the diameter
    for k in range(min(len(h), stack.diameter + 1)):
        if h[k] != 0.0:
            m += h[k] * stack.matrix(k)
    spec = FilterSpec(kind="neighborhood", coeffs=h)
    return FilterMatrix(m, spec, f"n={stack.n},D={stack.diameter}")


def gso_powers(s: np.ndarray, k: int) -> np.ndarray:
    """[S^0, ..., S^{k-1}] by repeated multiplication."""
    n = s.shape[0]
    out = np.empty((k, n, n))
    out[0] = np.eye(n)
    with np.errstate(over="ignore", invalid="ignore"):
        for p in range(1, k):
            out[p] = s @ out[p - 1]
            if not np.isfinite(out[p]).all():
                raise FilterOverflowError(power=p)
    return out


def active_taps(stack: KHopStack, h: Sequence[float]) -> int:
    return min(len(h), stack.diameter + 1)


# ---------- Application & metrics ----------
def apply(f: FilterMatrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[0] != f.n:
        raise FilterError(f"signal of shape {x.shape} does not match a filter on {f.n} nodes")
    return f.m @ x


def normalized_error(f_true: FilterMatrix, f_pert: FilterMatrix) -> float:
    """||H_pert - H||_F^2 / ||H||_F^2."""
    if f_true.m.shape != f_pert.m.shape:
        raise FilterError(f"shape mismatch: {f_true.m.shape} vs {f_pert.m.shape}")
    ref = float(np.sum(f_true.m**2))
    if ref == 0.0:
        raise FilterError("reference filter has zero norm")
    return float(np.sum((f_pert.m - f_true.m) ** 2)) / ref


def frobenius_norm(f: FilterMatrix) -> float:
    return float(np.linalg.norm(f.m, "fro"))


def max_entry(f: FilterMatrix) -> float:
    return float(np.abs(f.m).max())


# ---------- Coefficients ----------
def random_coeffs(k: int, rng_seed: int) -> np.ndarray:
    """Uniform (0, 1] taps normalized so they sum to one."""
    if k < 1:
        raise FilterError(f"need at least one tap, got {k}")
    rng = np.random.default_rng(rng_seed)
    h = 1.0 - rng.random(k)
    return h / h.sum()


def constant_coeffs(k: int) -> np.ndarray:
    if k < 1:
        raise FilterError(f"need at least one tap, got {k}")
    return np.full(k, 1.0 / k)


def parse_coeffs(text: str) -> np.ndarray:
    fields = [t.strip() for t in text.strip().split(",") if t.strip()]
    try:
        h = np.array([float(t) for t in fields])
    except ValueError as exc:
        raise FilterError(f"bad coefficient list {text.strip()!r}: {exc}") from exc
    if h.size == 0 or not np.isfinite(h).all():
        raise FilterError(f"bad coefficient list {text.strip()!r}")
    return h


def read_coeffs(path: str | os.PathLike) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if len(lines) != 1:
        raise FilterError(f"{path}: expected a single CSV line of coefficients, found {len(lines)}")
    return parse_coeffs(lines[0])


def write_coeffs(h: Sequence[float], path: str | os.PathLike) -> Path:
    return atomic_write_text(path, ",".join(repr(float(c)) for c in h) + "\n")


def format_dense(m: np.ndarray) -> str:
    """One CSV row per matrix row, exact float reprs."""
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in np.asarray(m))
