"""
Dense feed-forward networks with per-example gradients.

DP-SGD clips the gradient of every training example on its own, so besides the
usual batch gradient this engine returns one flat gradient vector per example.
The flat parameter layout is layer by layer, weights (row-major, in x out)
followed by bias.

All four network roles of the generators live here: encoder, decoder,
generator, discriminator and the diffusion noise predictor.
"""

import json
from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.special import expit

from errors import ShapeError

NETWORK_FORMAT_VERSION = 1

ACTIVATIONS = ("relu", "sigmoid", "tanh", "linear")
LOSS_MSE = "mse"
LOSS_BCE = "binary-cross-entropy"
LOSSES = (LOSS_MSE, LOSS_BCE)


@dataclass
class DenseLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"Unknown activation {self.activation!r}, expected one of {ACTIVATIONS}")
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ShapeError(
                f"Layer weights {self.weights.shape} and bias {self.bias.shape} do not chain"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def n_params(self) -> int:
        return self.weights.size + self.bias.size


@dataclass
class ForwardTrace:
    """Inputs, pre-activations and outputs of every layer for one batch."""

    inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    output: np.ndarray


class DenseNetwork:
    """
    Stack of affine layers each followed by an activation.

    Attributes:
        layers: list of DenseLayer, adjacent dimensions chain
    """

    def __init__(self, layers: list[DenseLayer]):
        if not layers:
            raise ShapeError("A network needs at least one layer")
        for previous, layer in zip(layers, layers[1:]):
            if previous.out_dim != layer.in_dim:
                raise ShapeError(f"Layer output {previous.out_dim} does not feed input {layer.in_dim}")
        self.layers = layers

    @classmethod
    def build(
        cls,
        sizes: list[int],
        rng: np.random.Generator,
        hidden_activation: str = "relu",
        output_activation: str = "linear",
    ) -> "DenseNetwork":
        """
        Build a network with uniform fan-in scaled (Kaiming style) initialization.

        Args:
            sizes: Layer widths, input first, e.g. [n, 128, d]
            rng: Seeded generator used for the weights
            hidden_activation: Activation of every layer except the last
            output_activation: Activation of the last layer

        Returns:
            DenseNetwork with zero biases
        """
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ShapeError(f"Invalid layer sizes {sizes}")

        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            activation = output_activation if i == len(sizes) - 2 else hidden_activation
            gain = np.sqrt(2.0) if activation == "relu" else 1.0
            bound = gain * np.sqrt(3.0 / fan_in)
            weights = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            layers.append(DenseLayer(weights, np.zeros(fan_out), activation))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def parameters(self) -> np.ndarray:
        """Flat copy of all parameters in the per-example gradient layout."""
        return np.concatenate([np.concatenate([layer.weights.ravel(), layer.bias]) for layer in self.layers])

    def set_parameters(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ShapeError(f"Expected {self.n_params} parameters, got shape {flat.shape}")
        offset = 0
        for layer in self.layers:
            size = layer.weights.size
            layer.weights = flat[offset : offset + size].reshape(layer.weights.shape).copy()
            offset += size
            layer.bias = flat[offset : offset + layer.out_dim].copy()
            offset += layer.out_dim

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(
            [DenseLayer(layer.weights.copy(), layer.bias.copy(), layer.activation) for layer in self.layers]
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.bias)) for layer in self.layers)

    def to_dict(self) -> dict:
        """Layer shapes, activation tags and parameter arrays (numpy) with a format version."""
        return {
            "format_version": NETWORK_FORMAT_VERSION,
            "layers": [
                {
                    "shape": list(layer.weights.shape),
                    "activation": layer.activation,
                    "weights": layer.weights,
                    "bias": layer.bias,
                }
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DenseNetwork":
        version = data.get("format_version")
        if version != NETWORK_FORMAT_VERSION:
            raise ShapeError(
                f"Network format version {version} not supported (expected {NETWORK_FORMAT_VERSION})"
            )
        layers = []
        for spec in data["layers"]:
            shape = tuple(spec["shape"])
            weights = np.asarray(spec["weights"], dtype=float).reshape(shape)
            layers.append(DenseLayer(weights, np.asarray(spec["bias"], dtype=float), spec["activation"]))
        return cls(layers)

    def to_json(self) -> str:
        data = self.to_dict()
        for layer in data["layers"]:
            layer["weights"] = layer["weights"].tolist()
            layer["bias"] = layer["bias"].tolist()
        return json.dumps(data)

    @classmethod
    def from_json(cls, text: str) -> "DenseNetwork":
        return cls.from_dict(json.loads(text))


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "sigmoid":
        return expit(z)
    if activation == "tanh":
        return np.tanh(z)
    return z


def _activation_derivative(z: np.ndarray, out: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (z > 0).astype(float)
    if activation == "sigmoid":
        return out * (1.0 - out)
    if activation == "tanh":
        return 1.0 - out**2
    return np.ones_like(z)


def _check_batch(net: DenseNetwork, batch) -> np.ndarray:
    values = np.asarray(batch, dtype=float)
    if values.ndim != 2 or values.shape[1] != net.in_dim:
        raise ShapeError(f"Batch of shape {values.shape} does not match input dimension {net.in_dim}")
    return values


def forward_trace(net: DenseNetwork, batch) -> ForwardTrace:
    """Forward pass that keeps every intermediate needed for backpropagation."""
    x = _check_batch(net, batch)
    inputs, pre_activations = [], []
    for layer in net.layers:
        inputs.append(x)
        z = x @ layer.weights + layer.bias
        pre_activations.append(z)
        x = _activate(z, layer.activation)
    return ForwardTrace(inputs, pre_activations, x)


def forward(net: DenseNetwork, batch) -> np.ndarray:
    """Apply the network row-wise to a (batch, in_dim) matrix."""
    return forward_trace(net, batch).output


def _check_loss(net: DenseNetwork, loss_tag: str) -> None:
    if loss_tag not in LOSSES:
        raise ShapeError(f"Unknown loss {loss_tag!r}, expected one of {LOSSES}")
    if loss_tag == LOSS_BCE and net.layers[-1].activation != "sigmoid":
        raise ShapeError("binary-cross-entropy needs a sigmoid output layer")


def _check_targets(trace: ForwardTrace, targets) -> np.ndarray:
    values = np.asarray(targets, dtype=float)
    if values.shape != trace.output.shape:
        raise ShapeError(f"Targets of shape {values.shape} do not match outputs {trace.output.shape}")
    return values


def example_losses(net: DenseNetwork, loss_tag: str, batch, targets) -> np.ndarray:
    """
    Loss of every example, averaged over output coordinates.

    mse: mean((y - t)^2); binary-cross-entropy: mean(softplus(z) - t*z) on the
    sigmoid logits z, which equals -mean(t log y + (1 - t) log(1 - y)).
    """
    _check_loss(net, loss_tag)
    trace = forward_trace(net, batch)
    t = _check_targets(trace, targets)
    if loss_tag == LOSS_MSE:
        return np.mean((trace.output - t) ** 2, axis=1)
    z = trace.pre_activations[-1]
    return np.mean(np.logaddexp(0.0, z) - t * z, axis=1)


def output_delta(net: DenseNetwork, loss_tag: str, trace: ForwardTrace, targets) -> np.ndarray:
    """Gradient of each example's loss with respect to the last pre-activation."""
    _check_loss(net, loss_tag)
    t = _check_targets(trace, targets)
    y = trace.output
    k = y.shape[1]
    if loss_tag == LOSS_BCE:
        return (y - t) / k
    last = net.layers[-1]
    return 2.0 * (y - t) / k * _activation_derivative(trace.pre_activations[-1], y, last.activation)


def backpropagate(
    net: DenseNetwork, trace: ForwardTrace, delta: np.ndarray, mode: str = "per_example"
) -> tuple[np.ndarray | None, np.ndarray]:
    """
    Backpropagate a last-layer pre-activation gradient through the network.

    Args:
        net: Network the trace was computed with
        trace: Result of forward_trace
        delta: (batch, out_dim) gradient with respect to the last pre-activation
        mode: "per_example" -> (batch, n_params) gradients,
              "mean" -> (n_params,) batch-averaged gradient,
              "none" -> skip parameter gradients (only the input gradient)

    Returns:
        (parameter gradients or None, (batch, in_dim) gradient w.r.t. the inputs)
    """
    if mode not in ("per_example", "mean", "none"):
        raise ValueError(f"Unknown backpropagation mode {mode!r}")

    batch_size = delta.shape[0]
    pieces: list[np.ndarray] = []
    for index in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[index]
        a_prev = trace.inputs[index]
        if mode == "per_example":
            grad_w = np.einsum("bi,bo->bio", a_prev, delta).reshape(batch_size, -1)
            pieces.append(np.concatenate([grad_w, delta], axis=1))
        elif mode == "mean":
            grad_w = (a_prev.T @ delta).ravel() / batch_size
            pieces.append(np.concatenate([grad_w, delta.mean(axis=0)]))

        upstream = delta @ layer.weights.T
        if index > 0:
            below = net.layers[index - 1]
            z = trace.pre_activations[index - 1]
            delta = upstream * _activation_derivative(z, trace.inputs[index], below.activation)
        else:
            input_grad = upstream

    if mode == "none":
        return None, input_grad
    axis = 1 if mode == "per_example" else 0
    return np.concatenate(pieces[::-1], axis=axis), input_grad


def backpropagate_output(
    net: DenseNetwork, trace: ForwardTrace, output_grad: np.ndarray, mode: str = "mean"
) -> tuple[np.ndarray | None, np.ndarray]:
    """
    backpropagate starting from a gradient with respect to the network output.

    Chains networks: the input gradient of a downstream network is the output
    gradient of the one feeding it.
    """
    last = net.layers[-1]
    delta = output_grad * _activation_derivative(trace.pre_activations[-1], trace.output, last.activation)
    return backpropagate(net, trace, delta, mode=mode)


def per_example_gradients(net: DenseNetwork, loss_tag: str, batch, targets) -> np.ndarray:
    """
    Gradient of every single-example loss with respect to all parameters.

    Returns:
        (batch, n_params) matrix; row i is the flat gradient g_i of example i
    """
    trace = forward_trace(net, batch)
    grads, _ = backpropagate(net, trace, output_delta(net, loss_tag, trace, targets))
    return grads


def apply_update(net: DenseNetwork, gradient: np.ndarray, learning_rate: float) -> None:
    """
    One SGD step: every parameter decreases by learning_rate times its gradient entry.

    Raises:
        ShapeError: gradient length differs from the parameter count
        ValueError: learning rate not positive
    """
    if learning_rate <= 0:
        raise ValueError(f"Learning rate must be positive, got {learning_rate}")
    gradient = np.asarray(gradient, dtype=float)
    if gradient.shape != (net.n_params,):
        raise ShapeError(f"Gradient of shape {gradient.shape} for {net.n_params} parameters")
    net.set_parameters(net.parameters() - learning_rate * gradient)
    if not net.is_finite():
        logger.warning("Parameters became non-finite after update")
