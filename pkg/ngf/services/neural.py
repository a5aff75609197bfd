"""Layered graph networks X(l) = sigma(H(l) X(l-1) Theta(l)) with analytic gradients.

H(l) is the adjacency GSO (plain GNN), a classical polynomial filter (GCNN) or a
neighborhood filter (NGCNN). Training is full-batch, by fixed-step gradient
descent or Adam.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from ngf.errors import DivergenceError
from ngf.models.graph import Graph
from ngf.models.network import (
    Checkpoint,
    FilterBasis,
    Gradients,
    LayerCache,
    LayerSpec,
    LossKind,
    NetworkSpec,
    NetworkState,
    Optimizer,
    TrainResult,
)
from ngf.services.filters import gso_powers
from ngf.services.graph_core import gso, khop_stack, spectral_radius
from ngf.utils.io import atomic_write_text

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12

EpochCallback = Callable[[int, NetworkState, np.ndarray], bool]


# ---------- Operators ----------
def _scale_spectral(mats: np.ndarray, skip_first: bool) -> np.ndarray:
    out = mats.copy()
    for k in range(1 if skip_first else 0, len(out)):
        if np.any(out[k]):
            out[k] /= spectral_radius(out[k])
    return out


def build_basis(g: Graph, layer: LayerSpec) -> FilterBasis:
    if layer.operator == "adjacency":
        mats = gso(g, layer.gso)[None]
        skip_first = False
    elif layer.operator == "classical":
        mats = gso_powers(gso(g, layer.gso), layer.taps)
        skip_first = True
    else:
        stack = khop_stack(g, layer.taps - 1)
        mats = np.stack([stack.matrix(k) for k in range(layer.taps)])
        skip_first = True
    if layer.scaling == "spectral":
        mats = _scale_spectral(mats, skip_first)
    return FilterBasis(mats)


def prepare_bases(spec: NetworkSpec, g: Graph) -> List[FilterBasis]:
    """One basis per layer; layers with the same operator settings share it."""
    built: Dict[Tuple, FilterBasis] = {}
    out = []
    for layer in spec.layers:
        key = (layer.operator, layer.taps, layer.gso, layer.scaling)
        if key not in built:
            built[key] = build_basis(g, layer)
        out.append(built[key])
    return out


# ---------- Parameters ----------
def init_state(spec: NetworkSpec, rng_seed: int) -> NetworkState:
    rng = np.random.default_rng(rng_seed)
    thetas, coeffs = [], []
    for f_in, f_out, layer in zip(spec.feature_dims[:-1], spec.feature_dims[1:], spec.layers):
        a = np.sqrt(6.0 / (f_in + f_out))
        thetas.append(rng.uniform(-a, a, size=(f_in, f_out)))
        coeffs.append(layer.initial_coeffs())
    if spec.output_init == "zeros":
        thetas[-1] = np.zeros_like(thetas[-1])
    return NetworkState(thetas, coeffs)


# ---------- Activations ----------
def _activate(kind: str, u: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(u, 0.0)
    if kind == "tanh":
        return np.tanh(u)
    return u


def _activation_grad(kind: str, u: np.ndarray, x: np.ndarray) -> np.ndarray:
    if kind == "relu":
        # subgradient 0 at u == 0
        return (u > 0.0).astype(u.dtype)
    if kind == "tanh":
        return 1.0 - x**2
    return np.ones_like(u)


def _head(kind: str, u: np.ndarray) -> np.ndarray:
    return softmax(u, axis=1) if kind == "softmax" else u


def _head_backward(kind: str, x: np.ndarray, dx: np.ndarray) -> np.ndarray:
    if kind == "softmax":
        return x * (dx - np.sum(dx * x, axis=1, keepdims=True))
    return dx


# ---------- Forward / losses / backward ----------
def _check_bases(spec: NetworkSpec, bases: Sequence[FilterBasis], n: int) -> None:
    if len(bases) != spec.num_layers:
        raise ValueError(f"{len(bases)} operator bases given for {spec.num_layers} layers")
    for l, (layer, basis) in enumerate(zip(spec.layers, bases), start=1):
        if basis.taps != layer.taps or basis.n != n:
            raise ValueError(f"layer {l}: basis of {basis.taps} taps on {basis.n} nodes does not fit")


def forward(
    spec: NetworkSpec, state: NetworkState, z: np.ndarray, bases: Sequence[FilterBasis]
) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != spec.feature_dims[0]:
        raise ValueError(f"input of shape {z.shape} does not match F(0)={spec.feature_dims[0]}")
    _check_bases(spec, bases, z.shape[0])

    x = z
    cache: List[LayerCache] = []
    with np.errstate(over="ignore", invalid="ignore"):
        for l, basis in enumerate(bases, start=1):
            h = basis.combine(state.coeffs[l - 1])
            q = x @ state.thetas[l - 1]
            u = h @ q
            out = _head(spec.head, u) if l == spec.num_layers else _activate(spec.activation, u)
            if not np.isfinite(out).all():
                state.cache = None
                raise DivergenceError(f"non-finite activation in layer {l}", layer=l)
            cache.append(LayerCache(x_in=x, q=q, h=h, u=u, x_out=out))
            x = out
    state.cache = cache
    return x


def loss_mse(y_hat: np.ndarray, y: np.ndarray) -> float:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.size != y.size:
        raise ValueError(f"length mismatch: {y_hat.size} vs {y.size}")
    return float(np.sum((y.reshape(y_hat.shape) - y_hat) ** 2))


def _mask_index(mask: np.ndarray, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise ValueError("cross-entropy needs at least one masked node")
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError("mask refers to nodes outside the graph")
    return idx


def loss_cross_entropy(probs: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    idx = _mask_index(mask, probs.shape[0])
    p = probs[idx, labels[idx]]
    return float(np.mean(-np.log(np.maximum(p, PROB_FLOOR))))


def _loss(kind: LossKind, out: np.ndarray, target: np.ndarray, mask) -> float:
    if kind == "mse":
        return loss_mse(out, target)
    return loss_cross_entropy(out, target, mask)


def backward(
    spec: NetworkSpec,
    state: NetworkState,
    target: np.ndarray,
    loss_kind: LossKind,
    bases: Sequence[FilterBasis],
    mask: Optional[np.ndarray] = None,
) -> Gradients:
    """Reverse-mode gradients of the loss at the cached forward pass."""
    cache = state.cache
    if not cache:
        raise RuntimeError("backward called without a cached forward pass")
    out = cache[-1].x_out

    # 1) gradient wrt the last pre-activation
    if loss_kind == "mse":
        dx = 2.0 * (out - np.asarray(target, dtype=np.float64).reshape(out.shape))
        du = _head_backward(spec.head, out, dx)
    else:
        if spec.head != "softmax":
            raise ValueError("cross-entropy training needs the softmax head")
        idx = _mask_index(mask, out.shape[0])
        labels = np.asarray(target, dtype=np.int64)
        du = np.zeros_like(out)
        du[idx] = out[idx]
        du[idx, labels[idx]] -= 1.0
        du /= idx.size

    # 2) walk the layers backwards
    n_layers = len(cache)
    g_thetas: List[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    g_coeffs: List[Optional[np.ndarray]] = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        c = cache[l]
        if l < n_layers - 1:
            du = dx * _activation_grad(spec.activation, c.u, c.x_out)
        if spec.layers[l].learnable:
            outer = du @ c.q.T
            g_coeffs[l] = np.einsum("kij,ij->k", bases[l].mats, outer)
        dq = c.h.T @ du
        g_thetas[l] = c.x_in.T @ dq
        if l:
            dx = dq @ state.thetas[l].T
    return Gradients(g_thetas, g_coeffs)


# ---------- Training ----------
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class _GradientDescent:
    def __init__(self, step_size: float):
        self.step_size = step_size

    def step(self, state: NetworkState, grads: Gradients) -> None:
        for l, g in enumerate(grads.thetas):
            state.thetas[l] = state.thetas[l] - self.step_size * g
        for l, g in enumerate(grads.coeffs):
            if g is not None:
                state.coeffs[l] = state.coeffs[l] - self.step_size * g


class _Adam(_GradientDescent):
    """Adam with bias-corrected first and second moments, one pair per parameter array."""

    def __init__(self, step_size: float, state: NetworkState):
        super().__init__(step_size)
        self.count = 0
        self.m1 = [np.zeros_like(p) for p in (*state.thetas, *state.coeffs)]
        self.m2 = [np.zeros_like(p) for p in (*state.thetas, *state.coeffs)]

    def _update(self, i: int, param: np.ndarray, grad: np.ndarray) -> np.ndarray:
        beta_1, beta_2 = ADAM_BETAS
        self.m1[i] = beta_1 * self.m1[i] + (1.0 - beta_1) * grad
        self.m2[i] = beta_2 * self.m2[i] + (1.0 - beta_2) * grad**2
        m1_hat = self.m1[i] / (1.0 - beta_1**self.count)
        m2_hat = self.m2[i] / (1.0 - beta_2**self.count)
        return param - self.step_size * m1_hat / (np.sqrt(m2_hat) + ADAM_EPS)

    def step(self, state: NetworkState, grads: Gradients) -> None:
        self.count += 1
        n_thetas = len(state.thetas)
        for l, g in enumerate(grads.thetas):
            state.thetas[l] = self._update(l, state.thetas[l], g)
        for l, g in enumerate(grads.coeffs):
            if g is not None:
                state.coeffs[l] = self._update(n_thetas + l, state.coeffs[l], g)


def train(
    spec: NetworkSpec,
    z: np.ndarray,
    target: np.ndarray,
    loss_kind: LossKind,
    epochs: int,
    step_size: float,
    rng_seed: int,
    bases: Sequence[FilterBasis],
    mask: Optional[np.ndarray] = None,
    on_epoch: Optional[EpochCallback] = None,
    optimizer: Optimizer = "gd",
) -> TrainResult:
    """Full-batch training with fixed-step gradient descent or Adam.

    `losses[e]` is the loss before the e-th update. `on_epoch(e, state, output)`
    sees the same forward pass and may return True to stop before updating.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if step_size <= 0:
        raise ValueError(f"step size must be positive, got {step_size}")

    state = init_state(spec, rng_seed)
    if optimizer == "adam":
        opt: _GradientDescent = _Adam(step_size, state)
    elif optimizer == "gd":
        opt = _GradientDescent(step_size)
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    losses: List[float] = []
    for epoch in range(epochs):
        try:
            out = forward(spec, state, z, bases)
        except DivergenceError as exc:
            raise DivergenceError(
                f"{exc.detail} at epoch {epoch}; last finite epoch {epoch - 1}",
                layer=exc.layer,
                epoch=epoch - 1,
            ) from exc
        loss = _loss(loss_kind, out, target, mask)
        if not np.isfinite(loss):
            raise DivergenceError(
                f"loss is non-finite at epoch {epoch}; last finite epoch {epoch - 1}", epoch=epoch - 1
            )
        losses.append(loss)
        if on_epoch is not None and on_epoch(epoch, state, out):
            break
        opt.step(state, backward(spec, state, target, loss_kind, bases, mask))
        if not state.is_finite():
            raise DivergenceError(
                f"parameters became non-finite after epoch {epoch}", epoch=epoch
            )
    log.debug("trained %d epochs, final loss %.6g", len(losses), losses[-1])
    return TrainResult(state=state, losses=losses, stopped_epoch=len(losses) - 1)


# ---------- Checkpoints ----------
def save_checkpoint(path: str | os.PathLike, spec: NetworkSpec, state: NetworkState) -> Path:
    ckpt = Checkpoint(
        spec=spec,
        thetas=[t.tolist() for t in state.thetas],
        coeffs=[c.tolist() for c in state.coeffs],
    )
    return atomic_write_text(path, ckpt.model_dump_json(indent=1) + "\n")


def load_checkpoint(path: str | os.PathLike) -> Tuple[NetworkSpec, NetworkState]:
    with open(path, encoding="utf-8") as fh:
        ckpt = Checkpoint.model_validate_json(fh.read())
    thetas = [np.array(t, dtype=np.float64).reshape(f_in, f_out) for t, f_in, f_out in zip(
        ckpt.thetas, ckpt.spec.feature_dims[:-1], ckpt.spec.feature_dims[1:]
    )]
    coeffs = [np.array(c, dtype=np.float64) for c in ckpt.coeffs]
    return ckpt.spec, NetworkState(thetas, coeffs)
