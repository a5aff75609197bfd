import numpy as np
import pytest
from pydantic import ValidationError

from ngf.models.experiment import (
    ClassifyConfig,
    ClassifyNetwork,
    DatasetParams,
    DenoiseConfig,
    DenoiseNetwork,
    FilterErrorConfig,
    GraphParams,
    PerturbClassifyConfig,
    RunRecord,
    SplitParams,
)
from ngf.models.graph import GsoChoice
from ngf.services.experiments import (
    build_graph,
    exp_classify,
    exp_denoise,
    exp_filter_error,
    exp_perturb_classify,
    format_records,
    make_signal,
    read_records,
    run_tasks,
    write_records,
)
from ngf.services.graph_core import is_connected


def _square(x):
    return x * x


def _by(records, metric, **params):
    return [r for r in records if r.metric == metric
            and all(r.params.get(k) == v for k, v in params.items())]


SMALL_FILTER = dict(realizations=3, graph=GraphParams(n=20, p=0.3), taps=[2, 3])

SMALL_CLASSIFY = dict(
    dataset=DatasetParams(source="synthetic", n=90, communities=3, p_in=0.2, p_out=0.01,
                          feature_dim=6, signal=2.0, degree_tail=None),
    split=SplitParams(train_per_class=5, val=20, test=40),
    taps=[2],
    kinds=["classical", "neighborhood"],
    operator_variants=["raw"],
    network=ClassifyNetwork(hidden_features=[8]),
    epochs=30,
    patience=10,
)


# ---------- Plumbing ----------
def test_run_tasks_keeps_order():
    assert run_tasks(_square, [3, 1, 2], jobs=1) == [9, 1, 4]
    assert run_tasks(_square, [3, 1, 2], jobs=2) == [9, 1, 4]


def test_record_formatting(tmp_path):
    ok = RunRecord.of("demo", 1, {"K": 2, "p": 0.1}, "err", 0.25)
    bad = RunRecord.of("demo", 1, {"K": 3, "p": 0.1}, "err", float("inf"), epoch=4)
    text = format_records([ok, bad])
    assert text == (
        "experiment,seed,params,metric,epoch,value\n"
        "demo,1,K=2;p=0.1,err,,0.25\n"
        "demo,1,K=3;p=0.1,err,4,diverged\n"
    )
    frame = read_records(write_records([ok, bad], tmp_path / "r.csv"))
    assert frame["value"].tolist() == ["0.25", "diverged"]


def test_records_must_be_finite_unless_diverged():
    with pytest.raises(ValidationError):
        RunRecord(experiment="x", seed=0, params={}, metric="m", value=float("nan"))


def test_build_graph_connected_flag():
    params = GraphParams(n=30, p=0.08)
    assert is_connected(build_graph(params, 5))
    loose = build_graph(params.model_copy(update={"connected": False}), 5)
    assert loose.n == 30


# ---------- Filter error ----------
def test_zero_perturbation_gives_zero_errors():
    cfg = FilterErrorConfig(**SMALL_FILTER, create_pct=0.0, destroy_pct=0.0)
    records = exp_filter_error(cfg)
    errors = _by(records, "normalized_error")
    assert errors and all(r.value == 0.0 for r in errors)


def test_filter_error_record_count():
    cfg = FilterErrorConfig(**SMALL_FILTER)
    records = exp_filter_error(cfg)
    per_realization = 3 * 2 * 2 * 3
    assert len(records) == per_realization + 2 * 2 * 2
    assert {r.metric for r in records[per_realization:]} == {
        "median_normalized_error", "mean_normalized_error"
    }


def test_constant_ngf_error_vanishes_for_wide_filters():
    cfg = FilterErrorConfig(realizations=4, graph=GraphParams(n=16, p=0.4), taps=[16],
                            coefficients="constant")
    records = exp_filter_error(cfg)
    assert all(r.value == 0.0 for r in _by(records, "normalized_error", kind="neighborhood"))


def test_classical_overflow_is_a_diverged_record():
    cfg = FilterErrorConfig(realizations=1, graph=GraphParams(n=20, p=0.9), taps=[400],
                            coefficients="constant")
    records = exp_filter_error(cfg)
    classical = _by(records, "normalized_error", kind="classical")
    assert classical and all(r.diverged for r in classical)
    assert _by(records, "median_normalized_error", kind="classical")[0].diverged


def test_filter_error_is_deterministic_across_jobs():
    cfg = FilterErrorConfig(**SMALL_FILTER)
    assert format_records(exp_filter_error(cfg, jobs=1)) == format_records(exp_filter_error(cfg, jobs=2))


# ---------- Denoising ----------
def _small_denoise(**kw):
    base = dict(
        realizations=2,
        graph=GraphParams(family="sbm", n=16, communities=2, p_in=0.6, p_out=0.1),
        generator_taps=3,
        noise_powers=[0.0, 0.1],
        network=DenoiseNetwork(input_features=4, hidden_features=[4], taps=3),
        epochs=5,
    )
    base.update(kw)
    return DenoiseConfig(**base)


def test_signal_generation():
    g = build_graph(GraphParams(family="sbm", n=16, communities=2, p_in=0.6, p_out=0.1), 1)
    x, y = make_signal(g, "neighborhood", 3, GsoChoice(normalize=True), 0.1, rng_seed=2)
    assert np.linalg.norm(x) == pytest.approx(1.0)
    assert np.sum((y - x) ** 2) == pytest.approx(0.1)
    x0, y0 = make_signal(g, "classical", 3, GsoChoice(normalize=True), 0.0, rng_seed=2)
    assert np.array_equal(x0, y0)


def test_denoise_record_layout():
    cfg = _small_denoise()
    records = exp_denoise(cfg)
    per_realization = 2 * 2 * 2 * 3 * 2
    aggregates = 2 * 2 * 3 * (cfg.epochs + 1)
    assert len(records) == per_realization + aggregates
    assert len(_by(records, "median_error", generator="neighborhood", noise_power=0.1,
                   architecture="neighborhood")) == cfg.epochs
    assert all(0 <= r.value < cfg.epochs for r in _by(records, "best_epoch") if not r.diverged)


def test_denoise_per_epoch_records_and_determinism():
    cfg = _small_denoise(realizations=1, per_epoch_records=True, generators=["neighborhood"],
                         noise_powers=[0.1])
    records = exp_denoise(cfg)
    assert len(_by(records, "error")) == 3 * cfg.epochs
    assert format_records(records) == format_records(exp_denoise(cfg, jobs=2))


def test_noiseless_signal_is_recovered_by_matched_architecture():
    cfg = DenoiseConfig(
        realizations=3,
        graph=GraphParams(family="sbm", n=32, communities=2, p_in=0.5, p_out=0.05),
        generator_taps=3,
        noise_powers=[0.0],
        architectures=["classical", "neighborhood"],
        network=DenoiseNetwork(input_features=32, hidden_features=[64], taps=3),
        epochs=800,
        step_size=0.005,
    )
    records = exp_denoise(cfg)
    for kind in ("classical", "neighborhood"):
        med = _by(records, "median_min_error", generator=kind, architecture=kind)[0]
        assert med.value < 1e-2


# ---------- Classification ----------
def test_two_tap_raw_operators_classify_identically():
    records = exp_classify(ClassifyConfig(**SMALL_CLASSIFY))
    assert len(records) == 2 * 3 + 2
    for metric in ("test_accuracy", "best_epoch", "best_val_loss"):
        classical = _by(records, metric, kind="classical")[0]
        neighborhood = _by(records, metric, kind="neighborhood")[0]
        assert classical.value == neighborhood.value


def test_classification_beats_chance():
    cfg = {**SMALL_CLASSIFY, "epochs": 150, "step_size": 0.1, "operator_variants": ["normalized"]}
    records = exp_classify(ClassifyConfig(**cfg))
    for rec in _by(records, "test_accuracy"):
        assert rec.value > 1 / 3 + 0.15


def test_unperturbed_sweep_matches_classify():
    plain = exp_classify(ClassifyConfig(**SMALL_CLASSIFY))
    swept = exp_perturb_classify(PerturbClassifyConfig(**SMALL_CLASSIFY, perturbations=[0.0, 0.2]))
    assert len(swept) == 2 * 2 * 3 + 2 * 2
    for kind in ("classical", "neighborhood"):
        expected = _by(plain, "test_accuracy", kind=kind)[0].value
        assert _by(swept, "test_accuracy", kind=kind, perturbation=0.0)[0].value == expected


# ---------- Acceptance trends ----------
@pytest.mark.slow
@pytest.mark.parametrize("family", ["er", "small-world"])
def test_classical_error_grows_with_taps(family):
    cfg = FilterErrorConfig(graph=GraphParams(family=family, n=64, p=0.15, k_ring=4, beta=0.15),
                            taps=[2, 8], realizations=100)
    records = exp_filter_error(cfg, jobs=4)
    med = {(r.params["kind"], r.params["K"]): r.value
           for r in records if r.metric == "median_normalized_error"}
    assert med[("classical", 8)] > med[("classical", 2)]
    assert med[("neighborhood", 8)] <= 2 * med[("neighborhood", 2)]


@pytest.mark.slow
def test_matched_architecture_denoises_best():
    cfg = DenoiseConfig(realizations=50, architectures=["classical", "neighborhood"])
    records = exp_denoise(cfg, jobs=4)
    # the error curve turns back up before training ends
    best = [r.value for r in _by(records, "best_epoch", generator="neighborhood",
                                 architecture="neighborhood") if not r.diverged]
    assert np.median(best) < cfg.epochs - 1
    med = {(r.params["generator"], r.params["architecture"]): r.value
           for r in records if r.metric == "median_min_error"}
    assert med[("neighborhood", "neighborhood")] < 0.1
    assert med[("neighborhood", "neighborhood")] < med[("neighborhood", "classical")]
    assert med[("classical", "classical")] < med[("classical", "neighborhood")]


@pytest.mark.slow
def test_ngf_accuracy_holds_as_taps_grow():
    cfg = ClassifyConfig(taps=[2, 6], realizations=5, operator_variants=["normalized"])
    records = exp_classify(cfg, jobs=4)
    med = {(r.params["kind"], r.params["K"]): r.value
           for r in records if r.metric == "median_test_accuracy"}
    assert med[("neighborhood", 6)] >= med[("neighborhood", 2)] - 0.01
    assert med[("classical", 6)] <= med[("classical", 2)] + 0.01


@pytest.mark.slow
def test_ngf_accuracy_drops_less_under_perturbation():
    # at K=2 the two normalized operators coincide, so compare the wider filters
    cfg = PerturbClassifyConfig(taps=[4, 6], perturbations=[0.0, 0.3], realizations=10,
                                operator_variants=["normalized"])
    records = exp_perturb_classify(cfg, jobs=4)
    med = {(r.params["kind"], r.params["K"], r.params["perturbation"]): r.value
           for r in records if r.metric == "median_test_accuracy"}
    drop = {kind: np.mean([med[(kind, K, 0.0)] - med[(kind, K, 0.3)] for K in cfg.taps])
            for kind in ("classical", "neighborhood")}
    assert drop["neighborhood"] <= drop["classical"]
