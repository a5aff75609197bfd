"""Sweeps behind the filter-error, denoising, classification and perturbation studies.

Every sweep is a list of independent tasks whose seeds are derived from the
master seed, so `jobs=1` and `jobs=N` produce identical records in the same order.
"""

from __future__ import annotations

import logging
import multiprocessing
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
import pandas as pd

from ngf.errors import DivergenceError, FilterOverflowError, NGFError
from ngf.models.dataset import CitationDataset
from ngf.models.experiment import (
    CSV_COLUMNS,
    ClassifyConfig,
    DatasetParams,
    DenoiseConfig,
    FilterErrorConfig,
    GraphParams,
    PerturbClassifyConfig,
    RunRecord,
)
from ngf.models.filter import FilterMatrix, FilterSpec
from ngf.models.graph import Graph, GsoChoice
from ngf.models.network import LayerSpec, NetworkSpec
from ngf.services.datasets import (
    largest_component,
    load_citation,
    make_split,
    synthetic_citation,
    with_split,
)
from ngf.services.filters import (
    build_ngf,
    constant_coeffs,
    frobenius_norm,
    horner,
    max_entry,
    normalized_error,
    random_coeffs,
)
from ngf.services.graph_core import (
    derive_seed,
    generate_er,
    generate_sbm,
    generate_small_world,
    gso,
    is_connected,
    khop_stack,
    perturb,
    sample_connected,
    sample_connected_perturbation,
)
from ngf.services.neural import forward, loss_cross_entropy, prepare_bases, train
from ngf.utils.config import dataset_files, resolve_data_path
from ngf.utils.io import atomic_write_text

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# seed tags, one per random stream
_GRAPH, _PERTURB, _COEFFS, _SIGNAL, _TRAIN, _DATASET, _SPLIT = range(7)

ExperimentConfig = Union[FilterErrorConfig, DenoiseConfig, ClassifyConfig, PerturbClassifyConfig]


# ---------- Plumbing ----------
def run_tasks(fn: Callable[[T], R], tasks: Sequence[T], jobs: int = 1) -> List[R]:
    """Ordered map over tasks, in a process pool when jobs > 1."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with multiprocessing.Pool(min(jobs, len(tasks))) as pool:
        return pool.map(fn, tasks, chunksize=1)


def records_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.row() for r in records], columns=CSV_COLUMNS)


def format_records(records: Sequence[RunRecord]) -> str:
    return records_frame(records).to_csv(index=False, lineterminator="\n")


def write_records(records: Sequence[RunRecord], path: str | os.PathLike) -> Path:
    return atomic_write_text(path, format_records(records))


def read_records(path: str | os.PathLike) -> pd.DataFrame:
    """Load a records CSV with every column kept as text."""
    return pd.read_csv(path, dtype=str, keep_default_na=False)


def _median(values: Sequence[float]) -> float:
    # diverged runs count as +inf
    arr = np.array([np.inf if v is None else v for v in values], dtype=np.float64)
    return float(np.median(arr))


def build_graph(params: GraphParams, rng_seed: int) -> Graph:
    if params.family == "er":
        factory = lambda s: generate_er(params.n, params.p, s)  # noqa: E731
    elif params.family == "small-world":
        factory = lambda s: generate_small_world(params.n, params.k_ring, params.beta, s)  # noqa: E731
    else:
        factory = lambda s: generate_sbm(  # noqa: E731
            params.n, params.communities, params.p_in, params.p_out, s
        )[0]
    if params.connected:
        return sample_connected(factory, rng_seed, max_attempts=params.max_resamples)
    # same draw as the first attempt of sample_connected
    return factory(derive_seed(rng_seed, 0))


def make_layer(kind: str, taps: int, coeff_mode: str, variant: str) -> LayerSpec:
    """Operator settings for one architecture kind.

    `normalized`: GSO divided by its spectral radius (adjacency and classical),
    spectral basis scaling for neighborhood layers. `raw`: binary adjacency as is.
    """
    normalized = variant == "normalized"
    if kind == "adjacency":
        return LayerSpec(operator="adjacency", gso=GsoChoice(normalize=normalized))
    if kind == "classical":
        return LayerSpec(operator="classical", taps=taps, coeff_mode=coeff_mode,
                         gso=GsoChoice(normalize=normalized))
    return LayerSpec(operator="neighborhood", taps=taps, coeff_mode=coeff_mode,
                     scaling="spectral" if normalized else "none")


# ---------- Filter error ----------
def _filter_error_task(args: Tuple[FilterErrorConfig, int]) -> List[RunRecord]:
    cfg, r = args
    seed_r = derive_seed(cfg.seed, r)
    g = build_graph(cfg.graph, derive_seed(seed_r, _GRAPH))
    pseed = derive_seed(seed_r, _PERTURB)
    if cfg.connected_perturbation and is_connected(g):
        gp = sample_connected_perturbation(g, cfg.create_pct, cfg.destroy_pct, pseed,
                                           max_attempts=cfg.graph.max_resamples)
    else:
        gp = perturb(g, cfg.create_pct, cfg.destroy_pct, pseed)

    k_max = max(cfg.taps) - 1
    stack, stack_p = khop_stack(g, k_max), khop_stack(gp, k_max)
    s, s_p = gso(g, cfg.gso), gso(gp, cfg.gso)

    out: List[RunRecord] = []
    for K in cfg.taps:
        if cfg.coefficients == "random":
            h = random_coeffs(K, derive_seed(seed_r, _COEFFS, K))
        else:
            h = constant_coeffs(K)
        spec = FilterSpec(kind="classical", coeffs=h.tolist(), gso=cfg.gso)

        results: Dict[str, Dict[str, Optional[float]]] = {}
        try:
            true = FilterMatrix(horner(s, h), spec)
            metrics: Dict[str, Optional[float]] = {
                "filter_norm": frobenius_norm(true), "max_entry": max_entry(true)
            }
            try:
                metrics["normalized_error"] = normalized_error(true, FilterMatrix(horner(s_p, h), spec))
            except FilterOverflowError:
                metrics["normalized_error"] = None
        except FilterOverflowError as exc:
            log.warning("classical filter overflow at K=%d (realization %d): %s", K, r, exc.detail)
            metrics = {"normalized_error": None, "filter_norm": None, "max_entry": None}
        results["classical"] = metrics

        true_n = build_ngf(stack, h)
        results["neighborhood"] = {
            "normalized_error": normalized_error(true_n, build_ngf(stack_p, h)),
            "filter_norm": frobenius_norm(true_n),
            "max_entry": max_entry(true_n),
        }

        for kind in ("classical", "neighborhood"):
            params = {"graph": cfg.graph.family, "K": K, "kind": kind, "realization": r}
            for metric in ("normalized_error", "filter_norm", "max_entry"):
                out.append(RunRecord.of(cfg.experiment, cfg.seed, params, metric, results[kind][metric]))
    return out


def exp_filter_error(cfg: FilterErrorConfig, jobs: int = 1) -> List[RunRecord]:
    """Normalized error between filters on a graph and on its perturbation, swept over K."""
    log.info("filter-error: %s graphs, %d realizations, K in %s", cfg.graph.family,
             cfg.realizations, cfg.taps)
    per_run = run_tasks(_filter_error_task, [(cfg, r) for r in range(cfg.realizations)], jobs)
    records = [rec for chunk in per_run for rec in chunk]

    errors: Dict[Tuple[int, str], List[Optional[float]]] = {}
    for rec in records:
        if rec.metric == "normalized_error":
            errors.setdefault((rec.params["K"], rec.params["kind"]), []).append(rec.value)
    for K in cfg.taps:
        for kind in ("classical", "neighborhood"):
            values = errors[(K, kind)]
            params = {"graph": cfg.graph.family, "K": K, "kind": kind}
            finite = [v for v in values if v is not None]
            mean = float(np.mean(finite)) if len(finite) == len(values) else None
            records.append(RunRecord.of(cfg.experiment, cfg.seed, params, "median_normalized_error",
                                        _median(values)))
            records.append(RunRecord.of(cfg.experiment, cfg.seed, params, "mean_normalized_error", mean))
    return records


# ---------- Denoising ----------
def denoise_spec(cfg: DenoiseConfig, architecture: str) -> NetworkSpec:
    net = cfg.network
    layer = make_layer(architecture, net.taps, net.coeff_mode, net.operator_variant)
    dims = [net.input_features, *net.hidden_features, 1]
    return NetworkSpec.uniform(dims, layer, activation=net.activation, head="identity",
                               output_init=net.output_init)


def make_signal(
    g: Graph, generator: str, taps: int, gso_choice: GsoChoice, noise_power: float, rng_seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Unit-norm diffused signal x and its noisy observation y with ||y - x||^2 = noise_power."""
    rng = np.random.default_rng(rng_seed)
    h = random_coeffs(taps, derive_seed(rng_seed, _COEFFS))
    b = rng.standard_normal(g.n)
    if generator == "classical":
        x = horner(gso(g, gso_choice), h) @ b
    else:
        x = build_ngf(khop_stack(g, taps - 1), h).m @ b
    x = x / np.linalg.norm(x)
    w = rng.standard_normal(g.n)
    w = w * (np.sqrt(noise_power) / np.linalg.norm(w)) if noise_power > 0 else np.zeros(g.n)
    return x, x + w


def _denoise_task(args: Tuple[DenoiseConfig, Graph, str, float, int]) -> Dict[str, Any]:
    cfg, g, generator, noise_power, r = args
    seed_r = derive_seed(cfg.seed, _SIGNAL, r)
    x, y = make_signal(g, generator, cfg.generator_taps, cfg.generator_gso, noise_power, seed_r)
    z = np.random.default_rng(derive_seed(seed_r, _DATASET)).standard_normal(
        (g.n, cfg.network.input_features)
    )
    ref = float(x @ x)

    traces: Dict[str, np.ndarray] = {}
    for arch in cfg.architectures:
        spec = denoise_spec(cfg, arch)
        bases = prepare_bases(spec, g)
        errors: List[float] = []

        def track(epoch, state, out, errors=errors):
            errors.append(float(np.sum((out[:, 0] - x) ** 2)) / ref)
            return False

        try:
            train(spec, z, y, "mse", cfg.epochs, cfg.step_size, derive_seed(seed_r, _TRAIN), bases,
                  on_epoch=track, optimizer=cfg.optimizer)
        except DivergenceError as exc:
            log.warning("denoise %s/%s realization %d diverged: %s", generator, arch, r, exc.detail)
        trace = np.full(cfg.epochs, np.inf)
        trace[:len(errors)] = errors
        traces[arch] = trace
    return {"generator": generator, "noise_power": noise_power, "realization": r, "traces": traces}


def exp_denoise(cfg: DenoiseConfig, jobs: int = 1) -> List[RunRecord]:
    """Fit each architecture to a noisy diffused signal from random input; keep the best epoch."""
    g = build_graph(cfg.graph, derive_seed(cfg.seed, _GRAPH))
    log.info("denoise: n=%d edges=%d, %d realizations x %d generators x %d noise powers",
             g.n, g.num_edges, cfg.realizations, len(cfg.generators), len(cfg.noise_powers))
    tasks = [
        (cfg, g, generator, p, r)
        for generator in cfg.generators
        for p in cfg.noise_powers
        for r in range(cfg.realizations)
    ]
    results = run_tasks(_denoise_task, tasks, jobs)

    records: List[RunRecord] = []
    stacked: Dict[Tuple[str, float, str], List[np.ndarray]] = {}
    for res in results:
        for arch in cfg.architectures:
            trace = res["traces"][arch]
            stacked.setdefault((res["generator"], res["noise_power"], arch), []).append(trace)
            params = {"generator": res["generator"], "noise_power": res["noise_power"],
                      "architecture": arch, "realization": res["realization"]}
            best = int(np.argmin(trace))
            finite = bool(np.isfinite(trace[best]))
            records.append(RunRecord.of(cfg.experiment, cfg.seed, params, "min_error", trace[best]))
            records.append(RunRecord.of(cfg.experiment, cfg.seed, params, "best_epoch",
                                        float(best) if finite else None))
            if cfg.per_epoch_records:
                for epoch, err in enumerate(trace.tolist()):
                    records.append(RunRecord.of(cfg.experiment, cfg.seed, params, "error", err, epoch))

    for generator in cfg.generators:
        for p in cfg.noise_powers:
            for arch in cfg.architectures:
                traces = np.stack(stacked[(generator, p, arch)])
                params = {"generator": generator, "noise_power": p, "architecture": arch}
                for epoch, v in enumerate(np.median(traces, axis=0).tolist()):
                    records.append(RunRecord.of(cfg.experiment, cfg.seed, params, "median_error", v, epoch))
                records.append(RunRecord.of(cfg.experiment, cfg.seed, params, "median_min_error",
                                            float(np.median(traces.min(axis=1)))))
    return records


# ---------- Classification ----------
def load_dataset(params: DatasetParams, rng_seed: int) -> CitationDataset:
    if params.source == "synthetic":
        return synthetic_citation(params.n, params.communities, params.p_in, params.p_out,
                                  params.feature_dim, params.signal, rng_seed,
                                  degree_tail=params.degree_tail)
    if params.name:
        content, cites = dataset_files(params.name)
    else:
        content, cites = resolve_data_path(params.content), resolve_data_path(params.cites)
    dataset, report = load_citation(content, cites, binarize=params.binarize)
    for line in report.lines():
        log.debug("%s", line)
    if params.largest_component or params.max_nodes is not None:
        dataset = largest_component(dataset, params.max_nodes)
        log.info("restricted to %d nodes", dataset.graph.n)
    return dataset


def prepare_classification(cfg: ClassifyConfig) -> CitationDataset:
    dataset = load_dataset(cfg.dataset, derive_seed(cfg.seed, _DATASET))
    split = make_split(dataset.graph.n, cfg.split.train_per_class, cfg.split.val, cfg.split.test,
                       dataset.labels, derive_seed(cfg.seed, _SPLIT))
    return with_split(dataset, split)


def classify_spec(cfg: ClassifyConfig, dataset: CitationDataset, kind: str, taps: int,
                  variant: str) -> NetworkSpec:
    layer = make_layer(kind, taps, cfg.network.coeff_mode, variant)
    dims = [dataset.num_features, *cfg.network.hidden_features, dataset.num_classes]
    return NetworkSpec.uniform(dims, layer, activation=cfg.network.activation, head="softmax")


def evaluate_classifier(
    cfg: ClassifyConfig, dataset: CitationDataset, graph: Graph, kind: str, taps: int,
    variant: str, rng_seed: int,
) -> Dict[str, Optional[float]]:
    """Train with early stopping on validation loss; test accuracy of the best-validation state."""
    split = dataset.split
    spec = classify_spec(cfg, dataset, kind, taps, variant)
    bases = prepare_bases(spec, graph)
    best: Dict[str, Any] = {"loss": np.inf, "epoch": -1, "state": None, "waited": 0}

    def early_stop(epoch, state, out):
        val = loss_cross_entropy(out, dataset.labels, split.val) if split.val.any() else \
            loss_cross_entropy(out, dataset.labels, split.train)
        if val < best["loss"]:
            best.update(loss=val, epoch=epoch, state=state.copy(), waited=0)
        else:
            best["waited"] += 1
        return best["waited"] >= cfg.patience

    try:
        train(spec, dataset.features, dataset.labels, "cross_entropy", cfg.epochs, cfg.step_size,
              rng_seed, bases, mask=split.train, on_epoch=early_stop, optimizer=cfg.optimizer)
    except DivergenceError as exc:
        log.warning("classify %s K=%d (%s) diverged: %s", kind, taps, variant, exc.detail)
        if best["state"] is None:
            return {"test_accuracy": None, "best_epoch": None, "best_val_loss": None}

    out = forward(spec, best["state"], dataset.features, bases)
    test = split.test
    accuracy = float(np.mean(np.argmax(out[test], axis=1) == dataset.labels[test]))
    return {"test_accuracy": accuracy, "best_epoch": float(best["epoch"]),
            "best_val_loss": float(best["loss"])}


_CLASSIFY_METRICS = ("test_accuracy", "best_epoch", "best_val_loss")


def _classify_task(args) -> List[RunRecord]:
    cfg, dataset, pct, pct_index, K, kind, variant, r = args
    graph = dataset.graph
    params: Dict[str, Any] = {}
    if pct is not None:
        graph = perturb(graph, pct, pct, derive_seed(cfg.seed, _PERTURB, r, pct_index))
        params["perturbation"] = pct
    params.update(K=K, kind=kind, variant=variant, realization=r)
    metrics = evaluate_classifier(cfg, dataset, graph, kind, K, variant,
                                  derive_seed(cfg.seed, _TRAIN, r))
    log.debug("classify %s: %s", params, metrics)
    return [RunRecord.of(cfg.experiment, cfg.seed, params, m, metrics[m]) for m in _CLASSIFY_METRICS]


def _with_accuracy_medians(cfg: ClassifyConfig, records: List[RunRecord]) -> List[RunRecord]:
    groups: Dict[Tuple, List[Optional[float]]] = {}
    keys: Dict[Tuple, Dict[str, Any]] = {}
    for rec in records:
        if rec.metric != "test_accuracy":
            continue
        params = {k: v for k, v in rec.params.items() if k != "realization"}
        key = tuple(params.items())
        keys.setdefault(key, params)
        # diverged runs count as zero accuracy in the median
        groups.setdefault(key, []).append(0.0 if rec.value is None else rec.value)
    aggregates = [
        RunRecord.of(cfg.experiment, cfg.seed, keys[key], "median_test_accuracy",
                     float(np.median(values)))
        for key, values in groups.items()
    ]
    return records + aggregates


def exp_classify(cfg: ClassifyConfig, jobs: int = 1) -> List[RunRecord]:
    """Test accuracy per (K, kind, operator variant, realization)."""
    dataset = prepare_classification(cfg)
    log.info("classify: n=%d F=%d M=%d, %d train / %d val / %d test", dataset.graph.n,
             dataset.num_features, dataset.num_classes, int(dataset.split.train.sum()),
             int(dataset.split.val.sum()), int(dataset.split.test.sum()))
    tasks = [
        (cfg, dataset, None, None, K, kind, variant, r)
        for K in cfg.taps
        for kind in cfg.kinds
        for variant in cfg.operator_variants
        for r in range(cfg.realizations)
    ]
    records = [rec for chunk in run_tasks(_classify_task, tasks, jobs) for rec in chunk]
    return _with_accuracy_medians(cfg, records)


def exp_perturb_classify(cfg: PerturbClassifyConfig, jobs: int = 1) -> List[RunRecord]:
    """As exp_classify, on graphs with a fraction of edges removed and the same fraction added.

    Features, labels and the split stay fixed; only the operators see the perturbed graph.
    """
    dataset = prepare_classification(cfg)
    log.info("perturb-sweep: n=%d edges=%d, perturbations %s", dataset.graph.n,
             dataset.graph.num_edges, cfg.perturbations)
    tasks = [
        (cfg, dataset, pct, i, K, kind, variant, r)
        for i, pct in enumerate(cfg.perturbations)
        for K in cfg.taps
        for kind in cfg.kinds
        for variant in cfg.operator_variants
        for r in range(cfg.realizations)
    ]
    records = [rec for chunk in run_tasks(_classify_task, tasks, jobs) for rec in chunk]
    return _with_accuracy_medians(cfg, records)


_RUNNERS = {
    "filter-error": exp_filter_error,
    "denoise": exp_denoise,
    "classify": exp_classify,
    "perturb-sweep": exp_perturb_classify,
}


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> List[RunRecord]:
    runner = _RUNNERS.get(cfg.experiment)
    if runner is None:
        raise NGFError(f"unknown experiment {cfg.experiment!r}")
    records = runner(cfg, jobs=jobs)
    diverged = sum(r.diverged for r in records)
    log.info("%s finished: %d records (%d diverged)", cfg.experiment, len(records), diverged)
    return records
