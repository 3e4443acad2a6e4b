"""Network engine tests: initialization statistics, exact forward values,
gradients against finite differences, optimizer arithmetic, checkpoints."""

import math

import numpy as np
import pytest

from plab import nn


# ---------------------------------------------------------------- oracles

def mse_loss(params, spec, batch, targets):
    """Loss via the forward pass only; never touches the pullback."""
    outputs, _ = nn.forward(params, spec, batch)
    return float(np.mean((outputs - targets) ** 2))


def fd_gradient(params, spec, batch, targets, h=1e-5):
    """Central finite differences of the loss surface, one coordinate at a time."""
    flat = nn.params_to_flat(params)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (
            mse_loss(nn.flat_to_params(spec, up), spec, batch, targets)
            - mse_loss(nn.flat_to_params(spec, dn), spec, batch, targets)
        ) / (2.0 * h)
    return grad


def truncated_normal_std_factor(bound=2.0):
    """Exact std ratio of a standard normal truncated to [-bound, bound]."""
    z = math.erf(bound / math.sqrt(2.0))
    pdf = math.exp(-0.5 * bound * bound) / math.sqrt(2.0 * math.pi)
    return math.sqrt(1.0 - 2.0 * bound * pdf / z)


def _random_net(widths, seed, n=7):
    spec = nn.MlpSpec(widths)
    params = nn.init_params(spec, seed)
    rng = np.random.default_rng(seed + 1000)
    batch = rng.uniform(-1.0, 1.0, size=(n, widths[0]))
    targets = rng.normal(size=(n, widths[-1]))
    return spec, params, batch, targets


# ------------------------------------------------------------ architecture

def test_spec_validation():
    with pytest.raises(ValueError):
        nn.MlpSpec((5,))
    with pytest.raises(ValueError):
        nn.MlpSpec((5, 0, 1))
    spec = nn.MlpSpec((5, 3, 2))
    assert spec.input_width == 5
    assert spec.output_width == 2
    assert spec.num_layers == 2
    assert spec.feature_width == 3


def test_depth_one_features_are_inputs():
    spec = nn.MlpSpec((3, 2))
    assert spec.feature_width == 3
    params = nn.init_params(spec, 0)
    x = np.random.default_rng(0).normal(size=(6, 3))
    outputs, features = nn.forward(params, spec, x)
    assert np.array_equal(features, x)
    assert np.array_equal(outputs, x @ params.weights[0] + params.biases[0])


def test_batch_shape_rejected():
    spec = nn.MlpSpec((3, 2))
    params = nn.init_params(spec, 0)
    with pytest.raises(ValueError, match="input width"):
        nn.forward(params, spec, np.zeros((4, 5)))


# ----------------------------------------------------------- initialization

def test_init_statistics_match_truncated_normal_moments():
    fan_in = 100
    spec = nn.MlpSpec((fan_in, 2000, 1))
    params = nn.init_params(spec, 7)
    w = params.weights[0]
    sigma = 1.0 / math.sqrt(fan_in)
    # Hard truncation bound, exact by construction.
    assert np.max(np.abs(w)) <= 2.0 * sigma
    expected_std = sigma * truncated_normal_std_factor(2.0)
    assert abs(w.std() - expected_std) < 0.02 * expected_std
    assert abs(w.mean()) < 3.0 * sigma / math.sqrt(w.size)
    assert all(np.all(b == 0.0) for b in params.biases)


def test_init_deterministic_per_seed():
    spec = nn.MlpSpec((4, 8, 2))
    a, b = nn.init_params(spec, 3), nn.init_params(spec, 3)
    c = nn.init_params(spec, 4)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert any(not np.array_equal(x, y) for x, y in zip(a.weights, c.weights))


# ----------------------------------------------------------------- forward

def test_forward_hand_case():
    # ReLU([2,3] @ I + [0,-1]) = [2,2]; output = 2 + 2 = 4.
    spec = nn.MlpSpec((2, 2, 1))
    params = nn.Params(
        weights=[np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[1.0], [1.0]])],
        biases=[np.array([0.0, -1.0]), np.array([0.0])],
    )
    outputs, features = nn.forward(params, spec, np.array([[2.0, 3.0]]))
    assert np.array_equal(features, np.array([[2.0, 2.0]]))
    assert np.array_equal(outputs, np.array([[4.0]]))


def test_outputs_are_linear_in_features():
    spec, params, batch, _ = _random_net((5, 9, 7, 3), seed=1, n=11)
    outputs, features = nn.forward(params, spec, batch)
    assert np.allclose(outputs, features @ params.weights[-1] + params.biases[-1],
                       rtol=0, atol=0)
    assert features.shape == (11, 7)
    assert np.all(features >= 0.0)


# --------------------------------------------------------------- gradients

@pytest.mark.parametrize("widths,seed", [((3, 5, 4, 2), 0), ((4, 6, 1), 1), ((2, 3), 2)])
def test_gradients_match_finite_differences(widths, seed):
    spec, params, batch, targets = _random_net(widths, seed)
    _, grads = nn.loss_and_grad(params, spec, batch, targets)
    analytic = nn.params_to_flat(grads)
    numeric = fd_gradient(params, spec, batch, targets)
    denom = max(float(np.max(np.abs(numeric))), 1e-8)
    assert float(np.max(np.abs(analytic - numeric))) / denom < 1e-5


def test_relu_subgradient_at_zero_is_zero():
    # Pre-activation exactly 0: the unit is dead for the backward pass too.
    spec = nn.MlpSpec((1, 1, 1))
    params = nn.Params(
        weights=[np.array([[1.0]]), np.array([[1.0]])],
        biases=[np.array([1.0]), np.array([0.0])],
    )
    x = np.array([[-1.0]])  # pre-activation = -1 + 1 = 0
    outputs, _, pullback = nn.forward_with_pullback(params, spec, x)
    assert outputs[0, 0] == 0.0
    grads = pullback(np.array([[1.0]]))
    assert grads.weights[0][0, 0] == 0.0
    assert grads.biases[0][0] == 0.0
    assert grads.weights[1][0, 0] == 0.0  # feature is 0
    assert grads.biases[1][0] == 1.0


def test_loss_normalization_mean_over_all_components():
    spec = nn.MlpSpec((2, 3))
    params = nn.Params(weights=[np.zeros((2, 3))], biases=[np.zeros(3)])
    batch = np.zeros((4, 2))
    targets = np.full((4, 3), 2.0)
    loss, grads = nn.loss_and_grad(params, spec, batch, targets)
    assert loss == 4.0  # mean of squared error 4 over every component
    # d loss / d bias_j = mean over batch of 2*(out - target) / out_width
    assert np.allclose(grads.biases[0], np.full(3, 2.0 * -2.0 * 4 / 12), rtol=0, atol=0)


# -------------------------------------------------------------- optimizers

def test_sgd_step_exact():
    spec, params, batch, targets = _random_net((3, 4, 2), seed=5)
    before = nn.snapshot_params(params)
    _, grads = nn.loss_and_grad(params, spec, batch, targets)
    state = nn.make_optimizer("sgd", learning_rate=0.05)
    nn.optimizer_step(state, params, grads)
    for p, p0, g in zip(params.weights, before.weights, grads.weights):
        assert np.array_equal(p, p0 - 0.05 * g)
    assert state.step_count == 1


def test_adam_first_step_closed_form():
    # With fresh accumulators the first update is lr * g / (|g| + eps), up to
    # the bias-correction arithmetic mirrored here operation for operation.
    g = 0.5
    lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
    spec = nn.MlpSpec((1, 1))
    params = nn.Params(weights=[np.array([[1.0]])], biases=[np.array([0.0])])
    grads = nn.Params(weights=[np.array([[g]])], biases=[np.array([0.0])])
    state = nn.make_optimizer("adam", learning_rate=lr)
    nn.optimizer_step(state, params, grads)

    m = (1.0 - b1) * g
    v = (1.0 - b2) * (g * g)
    c1 = 1.0 / (1.0 - b1)
    c2 = 1.0 / (1.0 - b2)
    expected = 1.0 - lr * (m * c1) / (np.sqrt(v * c2) + eps)
    assert params.weights[0][0, 0] == expected
    # Matches the advertised magnitude of the first step to float precision.
    assert abs((1.0 - expected) - 9.99998e-4) < 1e-8


def test_adam_accumulators_and_reset():
    spec, params, batch, targets = _random_net((3, 4, 2), seed=6)
    state = nn.make_optimizer("adam", 1e-3)
    for _ in range(3):
        _, grads = nn.loss_and_grad(params, spec, batch, targets)
        nn.optimizer_step(state, params, grads)
    assert state.step_count == 3
    assert state.m is not None
    fresh = nn.fresh_optimizer(state)
    assert fresh.step_count == 0 and fresh.m is None and fresh.v is None
    assert fresh.learning_rate == state.learning_rate
    assert state.step_count == 3  # template untouched


def test_optimizer_rejects_mismatched_shapes():
    params = nn.Params(weights=[np.zeros((2, 2))], biases=[np.zeros(2)])
    grads = nn.Params(weights=[np.zeros((2, 3))], biases=[np.zeros(3)])
    with pytest.raises(ValueError, match="shapes"):
        nn.optimizer_step(nn.make_optimizer("sgd"), params, grads)


def test_unknown_optimizer_kind_rejected():
    with pytest.raises(ValueError, match="optimizer"):
        nn.make_optimizer("rmsprop")


# ------------------------------------------------------- snapshots and flat

def test_snapshot_isolated_from_source():
    spec = nn.MlpSpec((2, 3, 1))
    params = nn.init_params(spec, 0)
    snap = nn.snapshot_params(params)
    params.weights[0][0, 0] += 1.0
    params.biases[0][0] += 1.0
    assert snap.weights[0][0, 0] != params.weights[0][0, 0]
    assert snap.biases[0][0] == 0.0


def test_flat_layout_is_layer_major_weights_then_biases():
    spec = nn.MlpSpec((2, 2, 1))
    params = nn.init_params(spec, 9)
    flat = nn.params_to_flat(params)
    expected = np.concatenate([
        params.weights[0].ravel(), params.biases[0],
        params.weights[1].ravel(), params.biases[1],
    ])
    assert np.array_equal(flat, expected)
    back = nn.flat_to_params(spec, flat)
    assert all(np.array_equal(a, b) for a, b in zip(back.weights, params.weights))
    assert all(np.array_equal(a, b) for a, b in zip(back.biases, params.biases))


def test_flat_size_mismatch_rejected():
    with pytest.raises(ValueError, match="entries"):
        nn.flat_to_params(nn.MlpSpec((2, 2)), np.zeros(7))


# ------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip_bit_exact(tmp_path):
    spec = nn.MlpSpec((3, 5, 2))
    params = nn.init_params(spec, 11)
    path = tmp_path / "net.bin"
    nn.save_params(path, spec, params)
    loaded_spec, loaded = nn.load_params(path)
    assert loaded_spec == spec
    assert all(np.array_equal(a, b) for a, b in zip(loaded.weights, params.weights))
    assert all(np.array_equal(a, b) for a, b in zip(loaded.biases, params.biases))


def test_checkpoint_layout_bytes(tmp_path):
    # magic, uint32 width count, uint32 widths, float64 LE payload
    spec = nn.MlpSpec((2, 2))
    params = nn.Params(weights=[np.array([[1.0, 2.0], [3.0, 4.0]])],
                       biases=[np.array([5.0, 6.0])])
    path = tmp_path / "net.bin"
    nn.save_params(path, spec, params)
    blob = path.read_bytes()
    assert blob[:5] == b"PLAB1"
    assert blob[5:9] == (2).to_bytes(4, "little")
    assert blob[9:17] == (2).to_bytes(4, "little") * 2
    assert np.array_equal(np.frombuffer(blob[17:], dtype="<f8"),
                          np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]))


def test_checkpoint_bad_magic_names_offset(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"XXXX1" + b"\x00" * 32)
    with pytest.raises(ValueError, match="offset 0"):
        nn.load_params(path)


def test_checkpoint_param_count_mismatch(tmp_path):
    spec = nn.MlpSpec((2, 2))
    params = nn.init_params(spec, 0)
    path = tmp_path / "net.bin"
    nn.save_params(path, spec, params)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])  # drop one float64
    with pytest.raises(ValueError, match="parameters"):
        nn.load_params(path)
