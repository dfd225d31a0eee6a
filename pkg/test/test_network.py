"""
Tests for the dense network engine: forward pass, per-example gradients,
parameter updates and serialization.
"""

import numpy as np
import pytest

from errors import ShapeError
from nn.network import (
    LOSS_BCE,
    LOSS_MSE,
    DenseLayer,
    DenseNetwork,
    apply_update,
    backpropagate,
    backpropagate_output,
    example_losses,
    forward,
    forward_trace,
    output_delta,
    per_example_gradients,
)

FD_STEP = 1e-5


def _finite_difference_gradients(net, loss_tag, batch, targets):
    """Central differences of every single-example loss w.r.t. every parameter."""
    base = net.parameters()
    perturbed = net.copy()
    grads = np.zeros((len(batch), base.size))
    for k in range(base.size):
        shifted = base.copy()
        shifted[k] += FD_STEP
        perturbed.set_parameters(shifted)
        upper = example_losses(perturbed, loss_tag, batch, targets)
        shifted[k] -= 2 * FD_STEP
        perturbed.set_parameters(shifted)
        lower = example_losses(perturbed, loss_tag, batch, targets)
        grads[:, k] = (upper - lower) / (2 * FD_STEP)
    return grads


def _random_small_network(rng, output_activation):
    """Random 2-layer network with at most 50 parameters."""
    n_in = int(rng.integers(1, 4))
    hidden = int(rng.integers(2, 5))
    n_out = int(rng.integers(1, 4))
    return DenseNetwork.build([n_in, hidden, n_out], rng, "tanh", output_activation)


class TestForward:
    """Tests for the forward pass."""

    def test_identity_layer(self):
        """A single linear layer with identity weights returns its input."""
        net = DenseNetwork([DenseLayer(np.eye(3), np.zeros(3), "linear")])
        x = np.array([[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]])

        np.testing.assert_array_equal(forward(net, x), x)

    def test_zero_network(self):
        """Zero weights and bias with linear output give zeros."""
        net = DenseNetwork([DenseLayer(np.zeros((2, 3)), np.zeros(3), "linear")])

        np.testing.assert_array_equal(forward(net, np.ones((4, 2))), np.zeros((4, 3)))

    def test_hand_computed_2_2_1(self):
        """Hand-set 2-2-1 relu network matches manual arithmetic."""
        net = DenseNetwork(
            [
                DenseLayer(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([0.5, -1.0]), "relu"),
                DenseLayer(np.array([[1.0], [-1.0]]), np.array([0.25]), "linear"),
            ]
        )

        # hidden = relu(1 + 3 + 0.5, 2 + 4 - 1) = (4.5, 5); out = 4.5 - 5 + 0.25
        assert forward(net, [[1.0, 1.0]])[0, 0] == pytest.approx(-0.25, abs=1e-12)

    def test_dimension_mismatch_raises(self):
        net = DenseNetwork([DenseLayer(np.eye(2), np.zeros(2), "linear")])

        with pytest.raises(ShapeError):
            forward(net, np.ones((1, 3)))

    def test_layers_must_chain(self):
        with pytest.raises(ShapeError):
            DenseNetwork(
                [
                    DenseLayer(np.zeros((2, 3)), np.zeros(3), "relu"),
                    DenseLayer(np.zeros((2, 1)), np.zeros(1), "linear"),
                ]
            )

    def test_unknown_activation_raises(self):
        with pytest.raises(ShapeError):
            DenseLayer(np.zeros((1, 1)), np.zeros(1), "softmax")

    def test_sigmoid_output_in_unit_interval(self, rng):
        """A sigmoid head keeps outputs strictly inside (0, 1)."""
        net = DenseNetwork.build([4, 8, 1], rng, "relu", "sigmoid")

        out = forward(net, rng.normal(size=(100, 4)) * 5)

        assert np.all((out > 0) & (out < 1))


class TestPerExampleGradients:
    """Tests for per-example gradients."""

    @pytest.mark.parametrize(
        "loss_tag, output_activation", [(LOSS_MSE, "linear"), (LOSS_MSE, "sigmoid"), (LOSS_BCE, "sigmoid")]
    )
    def test_matches_finite_differences(self, loss_tag, output_activation):
        """Every g_i matches central differences on random small networks."""
        rng = np.random.default_rng(99)
        for _ in range(7):
            net = _random_small_network(rng, output_activation)
            assert net.n_params <= 50
            batch = rng.normal(size=(3, net.in_dim))
            if loss_tag == LOSS_BCE:
                targets = rng.integers(0, 2, size=(3, net.out_dim)).astype(float)
            else:
                targets = rng.normal(size=(3, net.out_dim))

            grads = per_example_gradients(net, loss_tag, batch, targets)
            expected = _finite_difference_gradients(net, loss_tag, batch, targets)

            np.testing.assert_allclose(grads, expected, rtol=1e-4, atol=1e-7)

    def test_mean_mode_equals_averaged_examples(self, rng):
        """Averaging g_i reproduces the batch-mean gradient."""
        net = DenseNetwork.build([5, 7, 3], rng, "relu", "linear")
        batch = rng.normal(size=(11, 5))
        targets = rng.normal(size=(11, 3))

        per_example = per_example_gradients(net, LOSS_MSE, batch, targets)
        trace = forward_trace(net, batch)
        full, _ = backpropagate(net, trace, output_delta(net, LOSS_MSE, trace, targets), mode="mean")

        np.testing.assert_allclose(per_example.mean(axis=0), full, atol=1e-10)

    def test_identical_examples_identical_gradients(self, rng):
        """Repeated examples give repeated gradient rows."""
        net = DenseNetwork.build([3, 4, 1], rng, "relu", "sigmoid")
        batch = np.tile(rng.normal(size=(1, 3)), (4, 1))

        grads = per_example_gradients(net, LOSS_BCE, batch, np.ones((4, 1)))

        for row in grads[1:]:
            np.testing.assert_array_equal(row, grads[0])

    def test_shape_matches_parameter_count(self, rng):
        net = DenseNetwork.build([3, 4, 2], rng)

        grads = per_example_gradients(net, LOSS_MSE, np.ones((6, 3)), np.zeros((6, 2)))

        assert grads.shape == (6, net.n_params)

    def test_unknown_loss_raises(self, rng):
        net = DenseNetwork.build([2, 2], rng)

        with pytest.raises(ShapeError):
            per_example_gradients(net, "hinge", np.ones((1, 2)), np.ones((1, 2)))

    def test_cross_entropy_needs_sigmoid_head(self, rng):
        net = DenseNetwork.build([2, 2], rng, output_activation="linear")

        with pytest.raises(ShapeError):
            per_example_gradients(net, LOSS_BCE, np.ones((1, 2)), np.ones((1, 2)))

    def test_deterministic(self):
        """Same seed and inputs reproduce gradients bit for bit."""
        grads = []
        for _ in range(2):
            rng = np.random.default_rng(5)
            net = DenseNetwork.build([3, 6, 2], rng)
            grads.append(per_example_gradients(net, LOSS_MSE, np.ones((2, 3)), np.zeros((2, 2))))

        np.testing.assert_array_equal(grads[0], grads[1])


class TestBackpropagateOutput:
    def test_input_gradient_matches_finite_differences(self, rng):
        """d/dx sum(f(x)) from backpropagate_output matches central differences."""
        net = DenseNetwork.build([3, 5, 2], rng, "tanh", "sigmoid")
        x = rng.normal(size=(1, 3))

        trace = forward_trace(net, x)
        _, input_grad = backpropagate_output(net, trace, np.ones_like(trace.output), mode="none")

        expected = np.zeros(3)
        for k in range(3):
            step = np.zeros((1, 3))
            step[0, k] = FD_STEP
            expected[k] = (forward(net, x + step).sum() - forward(net, x - step).sum()) / (2 * FD_STEP)

        np.testing.assert_allclose(input_grad[0], expected, rtol=1e-5, atol=1e-8)


class TestApplyUpdate:
    """Tests for the SGD parameter update."""

    def test_zero_gradient_keeps_parameters(self, rng):
        net = DenseNetwork.build([3, 4, 2], rng)
        before = net.parameters()

        apply_update(net, np.zeros(net.n_params), 0.1)

        np.testing.assert_array_equal(net.parameters(), before)

    def test_unit_step_on_own_parameters_zeroes_them(self, rng):
        """eta = 1 and gradient = parameters gives all-zero parameters."""
        net = DenseNetwork.build([3, 4, 2], rng)

        apply_update(net, net.parameters(), 1.0)

        np.testing.assert_array_equal(net.parameters(), np.zeros(net.n_params))

    def test_sequential_updates_equal_summed_update(self, rng):
        """Two steps with the same eta equal one step on the summed gradient."""
        net = DenseNetwork.build([3, 4, 2], rng)
        other = net.copy()
        g1, g2 = rng.normal(size=(2, net.n_params))

        apply_update(net, g1, 0.01)
        apply_update(net, g2, 0.01)
        apply_update(other, g1 + g2, 0.01)

        np.testing.assert_allclose(net.parameters(), other.parameters(), atol=1e-12)

    def test_length_mismatch_raises(self, rng):
        net = DenseNetwork.build([2, 2], rng)

        with pytest.raises(ShapeError):
            apply_update(net, np.zeros(net.n_params + 1), 0.1)

    def test_non_positive_learning_rate_raises(self, rng):
        net = DenseNetwork.build([2, 2], rng)

        with pytest.raises(ValueError):
            apply_update(net, np.zeros(net.n_params), 0.0)


class TestSerialization:
    def test_json_round_trip(self, rng):
        """Shapes, activations and parameters survive JSON."""
        net = DenseNetwork.build([4, 3, 2], rng, "tanh", "sigmoid")

        restored = DenseNetwork.from_json(net.to_json())

        assert [layer.activation for layer in restored.layers] == ["tanh", "sigmoid"]
        np.testing.assert_array_equal(restored.parameters(), net.parameters())

    def test_unknown_format_version_raises(self, rng):
        data = DenseNetwork.build([2, 2], rng).to_dict()
        data["format_version"] = 99

        with pytest.raises(ShapeError, match="99"):
            DenseNetwork.from_dict(data)
