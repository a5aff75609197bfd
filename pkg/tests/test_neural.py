import itertools

import numpy as np
import pytest
from pydantic import ValidationError

from ngf.errors import DivergenceError
from ngf.models.graph import Graph, GsoChoice
from ngf.models.network import LayerSpec, NetworkSpec
from ngf.services.graph_core import spectral_radius
from ngf.services.neural import (
    backward,
    build_basis,
    forward,
    init_state,
    load_checkpoint,
    loss_cross_entropy,
    loss_mse,
    prepare_bases,
    save_checkpoint,
    train,
)

# small connected graph: a 6-cycle with one chord
GRAPH = Graph.from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)])
LABELS = np.array([0, 1, 2, 0, 1, 2])
MASK = np.array([True, True, False, True, False, True])


def _spec(operator, activation, coeff_mode, head, out_dim):
    layer = LayerSpec(operator=operator, taps=3, coeff_mode=coeff_mode,
                      gso=GsoChoice(normalize=True), scaling="spectral")
    return NetworkSpec.uniform([3, 4, out_dim], layer, activation=activation, head=head)


def _loss(spec, state, z, target, kind, bases):
    out = forward(spec, state, z, bases)
    return loss_mse(out, target) if kind == "mse" else loss_cross_entropy(out, LABELS, MASK)


GRAD_CASES = [
    case for case in itertools.product(
        ["classical", "neighborhood", "adjacency"],
        ["relu", "tanh", "identity"],
        ["fixed", "learnable"],
        ["mse", "cross_entropy"],
    )
    if not (case[0] == "adjacency" and case[2] == "learnable")
]


@pytest.mark.parametrize("operator,activation,coeff_mode,loss_kind", GRAD_CASES)
def test_gradients_match_finite_differences(operator, activation, coeff_mode, loss_kind):
    head = "softmax" if loss_kind == "cross_entropy" else "identity"
    spec = _spec(operator, activation, coeff_mode, head, 3 if head == "softmax" else 2)
    bases = prepare_bases(spec, GRAPH)
    rng = np.random.default_rng(7)
    z = rng.standard_normal((6, 3))
    target = LABELS if loss_kind == "cross_entropy" else rng.standard_normal((6, 2))
    state = init_state(spec, rng_seed=3)
    if coeff_mode == "learnable":
        state.coeffs = [rng.uniform(0.2, 1.0, size=c.shape) for c in state.coeffs]

    forward(spec, state, z, bases)
    grads = backward(spec, state, target, loss_kind, bases, mask=MASK)

    eps = 1e-6
    params = [(state.thetas, l, grads.thetas[l]) for l in range(spec.num_layers)]
    if coeff_mode == "learnable":
        params += [(state.coeffs, l, grads.coeffs[l]) for l in range(spec.num_layers)]
    else:
        assert all(g is None for g in grads.coeffs)
    for arrays, l, analytic in params:
        numeric = np.zeros_like(arrays[l])
        for idx in np.ndindex(arrays[l].shape):
            orig = arrays[l][idx]
            arrays[l][idx] = orig + eps
            up = _loss(spec, state, z, target, loss_kind, bases)
            arrays[l][idx] = orig - eps
            down = _loss(spec, state, z, target, loss_kind, bases)
            arrays[l][idx] = orig
            numeric[idx] = (up - down) / (2 * eps)
        assert np.allclose(analytic, numeric, rtol=1e-4, atol=1e-6)


def test_two_tap_classical_equals_ngf_on_binary_adjacency():
    z = np.random.default_rng(0).standard_normal((6, 3))
    outs = []
    for operator in ("classical", "neighborhood"):
        spec = NetworkSpec.uniform([3, 4, 2], LayerSpec(operator=operator, taps=2))
        outs.append(forward(spec, init_state(spec, rng_seed=5), z, prepare_bases(spec, GRAPH)))
    assert np.array_equal(outs[0], outs[1])


def test_adjacency_layer_is_single_fixed_tap():
    layer = LayerSpec(operator="adjacency", taps=4, coeff_mode="learnable")
    assert layer.taps == 1 and not layer.learnable
    assert np.array_equal(build_basis(GRAPH, layer).mats[0], GRAPH.adjacency())


def test_layer_and_network_validation():
    with pytest.raises(ValidationError):
        LayerSpec(operator="classical", taps=3, coeffs=[1.0, 2.0])
    with pytest.raises(ValidationError):
        NetworkSpec(feature_dims=[3, 2], layers=[LayerSpec(), LayerSpec()])


def test_spectral_scaling_normalizes_each_tap():
    basis = build_basis(GRAPH, LayerSpec(operator="neighborhood", taps=3, scaling="spectral"))
    assert np.array_equal(basis.mats[0], np.eye(6))
    for k in (1, 2):
        assert spectral_radius(basis.mats[k]) == pytest.approx(1.0, rel=1e-6)


def test_identical_layers_share_a_basis():
    spec = NetworkSpec.uniform([3, 4, 4, 2], LayerSpec(operator="neighborhood", taps=3))
    bases = prepare_bases(spec, GRAPH)
    assert bases[0] is bases[1] is bases[2]


def test_forward_divergence_names_layer():
    spec = NetworkSpec.uniform([3, 2], LayerSpec(operator="classical", taps=2), activation="identity")
    state = init_state(spec, rng_seed=0)
    state.thetas[0][:] = 1e308
    with pytest.raises(DivergenceError) as info:
        forward(spec, state, np.full((6, 3), 10.0), prepare_bases(spec, GRAPH))
    assert info.value.layer == 1


def test_training_reduces_loss():
    spec = _spec("neighborhood", "tanh", "learnable", "identity", 1)
    z = np.random.default_rng(1).standard_normal((6, 3))
    y = np.random.default_rng(2).standard_normal((6, 1))
    result = train(spec, z, y, "mse", 200, 0.01, rng_seed=4, bases=prepare_bases(spec, GRAPH))
    assert len(result.losses) == 200
    assert result.losses[-1] < result.losses[0]


def test_training_is_deterministic():
    spec = _spec("classical", "relu", "learnable", "softmax", 3)
    z = np.random.default_rng(1).standard_normal((6, 3))
    bases = prepare_bases(spec, GRAPH)
    a = train(spec, z, LABELS, "cross_entropy", 20, 0.1, rng_seed=9, bases=bases, mask=MASK)
    b = train(spec, z, LABELS, "cross_entropy", 20, 0.1, rng_seed=9, bases=bases, mask=MASK)
    assert a.losses == b.losses


def test_callback_stops_training():
    spec = _spec("classical", "tanh", "fixed", "identity", 1)
    z = np.ones((6, 3))
    seen = []

    def stop_at_three(epoch, state, out):
        seen.append(epoch)
        return epoch == 3

    result = train(spec, z, np.zeros(6), "mse", 50, 0.01, rng_seed=0,
                   bases=prepare_bases(spec, GRAPH), on_epoch=stop_at_three)
    assert seen == [0, 1, 2, 3]
    assert result.stopped_epoch == 3 and len(result.losses) == 4


def test_huge_step_diverges():
    spec = NetworkSpec.uniform([3, 4, 1], LayerSpec(operator="classical", taps=2), activation="identity")
    z = np.random.default_rng(1).standard_normal((6, 3))
    with pytest.raises(DivergenceError) as info:
        train(spec, z, np.ones(6), "mse", 500, 1e6, rng_seed=0, bases=prepare_bases(spec, GRAPH))
    assert info.value.epoch is not None


@pytest.mark.parametrize("epochs,step", [(0, 0.1), (5, 0.0)])
def test_train_argument_checks(epochs, step):
    spec = _spec("classical", "tanh", "fixed", "identity", 1)
    with pytest.raises(ValueError):
        train(spec, np.ones((6, 3)), np.zeros(6), "mse", epochs, step, 0, prepare_bases(spec, GRAPH))


def test_cross_entropy_needs_softmax_head():
    spec = _spec("classical", "tanh", "fixed", "identity", 3)
    bases = prepare_bases(spec, GRAPH)
    state = init_state(spec, 0)
    forward(spec, state, np.ones((6, 3)), bases)
    with pytest.raises(ValueError):
        backward(spec, state, LABELS, "cross_entropy", bases, mask=MASK)


def test_backward_without_forward():
    spec = _spec("classical", "tanh", "fixed", "identity", 1)
    with pytest.raises(RuntimeError):
        backward(spec, init_state(spec, 0), np.zeros(6), "mse", prepare_bases(spec, GRAPH))


def test_losses():
    assert loss_mse(np.array([1.0, 2.0]), np.array([0.0, 0.0])) == 5.0
    probs = np.array([[0.5, 0.5], [1.0, 0.0]])
    assert loss_cross_entropy(probs, np.array([0, 1]), np.array([True, False])) == pytest.approx(np.log(2))
    # floored probability keeps the loss finite
    assert np.isfinite(loss_cross_entropy(probs, np.array([0, 1]), np.array([False, True])))
    with pytest.raises(ValueError):
        loss_cross_entropy(probs, np.array([0, 1]), np.array([False, False]))


def test_checkpoint_round_trip(tmp_path):
    spec = _spec("neighborhood", "relu", "learnable", "softmax", 3)
    state = init_state(spec, rng_seed=12)
    path = save_checkpoint(tmp_path / "net.json", spec, state)
    spec2, state2 = load_checkpoint(path)
    assert spec2 == spec
    for a, b in zip(state.thetas + state.coeffs, state2.thetas + state2.coeffs):
        assert np.array_equal(a, b)


def test_two_layer_ngcnn_by_hand():
    p3 = Graph.from_edges(3, [(0, 1), (1, 2)])
    layer = LayerSpec(operator="neighborhood", taps=3, coeff_mode="fixed", coeffs=[0.5, 1.0, 0.25])
    spec = NetworkSpec(feature_dims=[1, 1, 1], layers=[layer, layer], activation="relu")
    state = init_state(spec, rng_seed=0)
    state.thetas = [np.array([[2.0]]), np.array([[-1.0]])]
    out = forward(spec, state, np.array([[1.0], [-1.0], [2.0]]), prepare_bases(spec, p3))
    # hidden layer: relu([0, 5, 0.5])
    assert np.allclose(out[:, 0], [-5.125, -3.0, -5.25])


@pytest.mark.parametrize("operator", ["adjacency", "classical", "neighborhood"])
def test_forward_is_permutation_equivariant(operator):
    perm = np.array([3, 0, 5, 1, 4, 2])
    moved = Graph.from_edges(6, perm[GRAPH.edges])
    spec = _spec(operator, "tanh", "learnable", "identity", 2)
    z = np.random.default_rng(3).standard_normal((6, 3))
    z_moved = np.empty_like(z)
    z_moved[perm] = z
    out = forward(spec, init_state(spec, rng_seed=1), z, prepare_bases(spec, GRAPH))
    out_moved = forward(spec, init_state(spec, rng_seed=1), z_moved, prepare_bases(spec, moved))
    assert np.allclose(out_moved[perm], out, rtol=1e-6, atol=1e-9)


def test_softmax_head_rows_are_distributions():
    spec = _spec("neighborhood", "relu", "learnable", "softmax", 3)
    z = np.random.default_rng(5).standard_normal((6, 3)) * 10
    probs = forward(spec, init_state(spec, rng_seed=2), z, prepare_bases(spec, GRAPH))
    assert np.allclose(probs.sum(axis=1), 1.0) and np.all(probs >= 0)


def test_zero_output_init():
    layer = LayerSpec(operator="neighborhood", taps=3)
    spec = NetworkSpec.uniform([3, 4, 1], layer, activation="tanh", output_init="zeros")
    state = init_state(spec, rng_seed=3)
    assert not state.thetas[-1].any() and state.thetas[0].any()
    out = forward(spec, state, np.random.default_rng(0).standard_normal((6, 3)), prepare_bases(spec, GRAPH))
    assert not out.any()


def test_adam_fits_small_target():
    spec = _spec("neighborhood", "tanh", "learnable", "identity", 1)
    z = np.random.default_rng(1).standard_normal((6, 3))
    y = np.random.default_rng(2).standard_normal((6, 1))
    result = train(spec, z, y, "mse", 500, 0.01, rng_seed=4, bases=prepare_bases(spec, GRAPH),
                   optimizer="adam")
    assert min(result.losses) < 0.1 * result.losses[0]


def test_unknown_optimizer():
    spec = _spec("classical", "tanh", "fixed", "identity", 1)
    with pytest.raises(ValueError, match="optimizer"):
        train(spec, np.ones((6, 3)), np.zeros(6), "mse", 5, 0.1, 0, prepare_bases(spec, GRAPH),
              optimizer="sgd")
