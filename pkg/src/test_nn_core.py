# src/test_nn_core.py

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.errors import FormatError, ModelStateError, NumericalError, ShapeError
from src.nn.gradcheck import gradient_check, max_relative_error, numerical_gradient
from src.nn.layers import Add, Conv2D, Dense, ReLU
from src.nn.network import Network, backward, count_macs, count_params, forward, init_params
from src.nn.optim import AdamState, adam_step, mse_loss
from src.nn.tensor import ModelParams, Tensor
from src.nn.weights_io import decode_weights, encode_weights, load_weights, save_weights

TOLERANCE = 1e-4


def _double(network: Network, seed: int = 0) -> Network:
    init_params(network, seed, dtype=np.float64)
    for layer in network.layers:
        for tensor in layer.params().values():
            # non-zero biases exercise the bias gradients too
            if tensor.data.ndim == 1:
                tensor.data[...] = np.random.default_rng(seed + 1).uniform(-0.3, 0.3, tensor.shape)
    return network


# ------------------------------
# 1. Layers and wiring
# ------------------------------
def test_dense_acts_on_the_last_axis():
    dense = Dense("d", 3, 2)
    dense.weight.data = np.arange(6, dtype=np.float32).reshape(3, 2)
    dense.bias.data = np.array([1.0, -1.0], dtype=np.float32)
    out = dense.forward(np.ones((4, 5, 3), dtype=np.float32))
    assert out.shape == (4, 5, 2)
    assert_allclose(out[0, 0], [7.0, 8.0])


def test_conv_with_a_centre_tap_is_a_pointwise_map():
    conv = Conv2D("c", 3, 3, 2, 1)
    conv.weight.data[1, 1, :, 0] = [2.0, -1.0]
    x = np.random.default_rng(0).standard_normal((2, 5, 4, 2)).astype(np.float32)
    out = conv.forward(x)
    assert_allclose(out[..., 0], 2 * x[..., 0] - x[..., 1], rtol=1e-6)


def test_conv_uses_zero_padding():
    conv = Conv2D("c", 3, 3, 1, 1)
    conv.weight.data[...] = 1.0
    out = conv.forward(np.ones((1, 4, 4, 1), dtype=np.float32))
    assert out[0, 0, 0, 0] == 4.0
    assert out[0, 1, 1, 0] == 9.0


def test_conv_rejects_even_kernels():
    with pytest.raises(ValueError, match="odd"):
        Conv2D("c", 2, 3, 1, 1)


def test_shape_errors_name_the_layer():
    with pytest.raises(ShapeError, match="dense_in"):
        Dense("dense_in", 4, 2).forward(np.ones((3, 5)))
    with pytest.raises(ShapeError, match="conv_a"):
        Conv2D("conv_a", 3, 3, 2, 2).forward(np.ones((4, 4, 2)))


def test_backward_before_forward_is_a_state_error():
    with pytest.raises(ModelStateError):
        Dense("d", 2, 2).backward(np.ones((1, 2)))
    network = Network([Dense("d", 2, 2)])
    with pytest.raises(ModelStateError):
        network.backward(np.ones((1, 2)))


def test_add_outside_a_network_is_a_state_error():
    with pytest.raises(ModelStateError):
        Add("skip", skip_from=0).forward(np.ones(2))


def test_network_validates_skip_sources_and_names():
    with pytest.raises(ValueError, match="not earlier"):
        Network([Dense("d", 2, 2), Add("skip", skip_from=2)])
    with pytest.raises(ValueError, match="unique"):
        Network([Dense("d", 2, 2), Dense("d", 2, 2)])


def test_residual_add_with_mismatched_shapes():
    network = Network([Dense("d", 2, 3), Add("skip", skip_from=0)])
    with pytest.raises(ShapeError):
        network.forward(np.ones((1, 2)))
    with pytest.raises(ShapeError):
        count_macs(network, (2,))


def test_identity_residual_block():
    network = Network([Dense("d", 3, 3), Add("skip", skip_from=0)])
    x = np.random.default_rng(1).standard_normal((2, 3)).astype(np.float32)
    assert_array_equal(forward(network, x), x)


def test_init_is_seeded_and_keeps_tensor_identity():
    a, b = Network([Dense("d", 4, 3)]), Network([Dense("d", 4, 3)])
    weight = a.layers[0].weight
    init_params(a, 7)
    init_params(b, 7)
    assert a.layers[0].weight is weight
    assert_array_equal(a.layers[0].weight.data, b.layers[0].weight.data)
    assert_array_equal(a.layers[0].bias.data, np.zeros(3))
    bound = np.sqrt(6.0 / 7)
    assert np.all(np.abs(weight.data) <= bound)


# ------------------------------
# 2. Counters
# ------------------------------
def test_dense_and_conv_counts():
    network = Network([Conv2D("c", 3, 3, 2, 4), ReLU("r"), Dense("d", 4, 1)])
    assert count_params(network) == (3 * 3 * 2 * 4 + 4) + (4 + 1)
    assert count_macs(network, (10, 6, 2)) == 60 * (9 * 2 * 4) + 60 * 4


# ------------------------------
# 3. Gradients
# ------------------------------
def test_dense_relu_gradients():
    network = _double(Network([Dense("d1", 5, 4), ReLU("r"), Dense("d2", 4, 3)]))
    rng = np.random.default_rng(2)
    errors = gradient_check(network, rng.standard_normal((6, 5)), rng.standard_normal((6, 3)))
    assert max(errors.values()) < TOLERANCE


def test_conv_gradients():
    network = _double(Network([Conv2D("c1", 3, 3, 2, 3), ReLU("r"), Conv2D("c2", 5, 3, 3, 2)]), seed=3)
    rng = np.random.default_rng(4)
    errors = gradient_check(network, rng.standard_normal((2, 4, 4, 2)), rng.standard_normal((2, 4, 4, 2)))
    assert max(errors.values()) < TOLERANCE


def test_nested_residual_gradients():
    network = _double(Network([
        Conv2D("c1", 3, 3, 2, 3),
        Conv2D("c2", 3, 3, 3, 3),
        ReLU("r"),
        Conv2D("c3", 3, 3, 3, 3),
        Add("inner", skip_from=1),
        Conv2D("c4", 3, 3, 3, 2),
        Add("outer", skip_from=0),
    ]), seed=5)
    rng = np.random.default_rng(6)
    errors = gradient_check(network, rng.standard_normal((2, 4, 4, 2)), rng.standard_normal((2, 4, 4, 2)))
    assert max(errors.values()) < TOLERANCE


def test_backward_accumulates_parameter_gradients():
    network = _double(Network([Dense("d", 3, 2)]))
    x = np.ones((2, 3))
    network.zero_grad()
    network.forward(x)
    backward(network, np.ones((2, 2)))
    once = network.layers[0].weight.grad.copy()
    network.forward(x)
    network.backward(np.ones((2, 2)))
    assert_allclose(network.layers[0].weight.grad, 2 * once)


def test_numerical_gradient_of_a_quadratic():
    values = np.array([1.0, -2.0, 0.5])
    grad = numerical_gradient(lambda: float(np.sum(values ** 2)), values)
    assert_allclose(grad, 2 * values, rtol=1e-6)
    assert max_relative_error(grad, 2 * values) < 1e-6


# ------------------------------
# 4. Loss and optimizer
# ------------------------------
def test_mse_loss_is_the_batch_mean_of_squared_norms():
    pred = np.array([[1.0, 2.0], [0.0, 0.0]])
    target = np.array([[0.0, 0.0], [0.0, 3.0]])
    loss, grad = mse_loss(pred, target)
    assert loss == pytest.approx((1 + 4 + 9) / 2)
    assert_allclose(grad, (pred - target))


def test_mse_loss_rejects_mismatched_shapes():
    with pytest.raises(ShapeError):
        mse_loss(np.ones((2, 3)), np.ones((2, 2)))


def test_first_adam_step_moves_each_weight_by_the_learning_rate():
    tensor = Tensor(np.array([1.0, -1.0, 0.5]))
    params = ModelParams({"w": tensor})
    state = AdamState.for_params(params, lr=0.01)
    adam_step(params, {"w": np.array([3.0, -0.2, 0.0])}, state)
    assert_allclose(tensor.data, [0.99, -0.99, 0.5], atol=1e-6)
    assert state.step_count == 1


def test_zero_learning_rate_leaves_parameters_unchanged():
    tensor = Tensor(np.array([1.0, 2.0]))
    params = ModelParams({"w": tensor})
    state = AdamState.for_params(params, lr=0.0)
    for _ in range(3):
        adam_step(params, {"w": np.array([1.0, -1.0])}, state)
    assert_array_equal(tensor.data, [1.0, 2.0])


def test_adam_refuses_non_finite_gradients():
    params = ModelParams({"w": Tensor(np.zeros(2))})
    state = AdamState.for_params(params)
    with pytest.raises(NumericalError, match="'w'"):
        adam_step(params, {"w": np.array([np.nan, 0.0])}, state)


# ------------------------------
# 5. Parameters and weight files
# ------------------------------
def test_model_params_prefix_merge_and_load():
    a = ModelParams({"w": Tensor(np.zeros(2))}).prefixed("a.")
    b = ModelParams({"w": Tensor(np.zeros((2, 2)))}).prefixed("b.")
    merged = a.merged(b)
    assert list(merged) == ["a.w", "b.w"]
    assert merged.total_count == 6
    with pytest.raises(ValueError, match="duplicate"):
        merged.merged(a)
    with pytest.raises(ShapeError):
        merged.load({"a.w": np.zeros(3), "b.w": np.zeros((2, 2))})
    with pytest.raises(ShapeError, match="missing"):
        merged.load({"a.w": np.zeros(2)})


def test_weight_file_round_trip(tmp_path):
    network = Network([Conv2D("c", 3, 3, 2, 4), Dense("d", 4, 2)])
    init_params(network, 3)
    path = str(tmp_path / "net.iciw")
    save_weights(path, network.parameters().snapshot(), {"architecture": "toy", "n_ici": 2})
    tensors, descriptor = load_weights(path)
    assert descriptor == {"architecture": "toy", "n_ici": 2}
    assert list(tensors) == list(network.parameters())
    for name, tensor in network.parameters().items():
        assert_array_equal(tensors[name], tensor.data)

    with open(path, "rb") as f:
        assert encode_weights(tensors, descriptor) == f.read()


def test_weight_file_rejects_corruption():
    payload = encode_weights({"w": np.ones((2, 2), dtype=np.float32)}, {"x": 1})
    with pytest.raises(FormatError, match="magic"):
        decode_weights(b"XXXX" + payload[4:])
    with pytest.raises(FormatError, match="version"):
        decode_weights(payload[:4] + (9).to_bytes(4, "little") + payload[8:])
    with pytest.raises(FormatError, match="truncated"):
        decode_weights(payload[:-3])
    with pytest.raises(FormatError, match="trailing"):
        decode_weights(payload + b"\x00")


def test_missing_weight_file_is_a_runtime_error(tmp_path):
    with pytest.raises(RuntimeError, match="Failed to read"):
        load_weights(str(tmp_path / "absent.iciw"))
