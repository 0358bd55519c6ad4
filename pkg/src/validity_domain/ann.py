"""Feedforward tanh networks (inference, gradients, training) and the peaks test function."""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .datasets import MINMAX, STANDARDIZE, Scaler, apply_scaler, fit_scaler, invert_scaler
from .errors import ConfigurationError, ConvergenceError, DataFormatError, ExpressionError
from .log import debug, info
from .relax import Exp, Expr, MlpOutput, Square, as_expr
from .utils import read_json, write_json

SCHEMA = "validity-domain/mlp@1"
"""Schema tag of serialized networks"""

TANH = "tanh"
LINEAR = "linear"


@dataclass(frozen=True, eq=False)
class MlpModel:
    """
    Multilayer perceptron with tanh hidden layers and a linear output layer.

    Inputs are scaled with ``input_scaler`` before the first layer; outputs
    are unscaled with ``output_scaler`` after the last one.
    """

    weights: Tuple[np.ndarray, ...]
    """Per layer, a (fan_out, fan_in) matrix"""
    biases: Tuple[np.ndarray, ...]
    input_scaler: Scaler
    output_scaler: Scaler

    def __post_init__(self):  # noqa: D105
        weights = tuple(np.atleast_2d(np.array(W, dtype=float)) for W in self.weights)
        biases = tuple(np.array(b, dtype=float).ravel() for b in self.biases)
        if not weights or len(weights) != len(biases):
            raise DataFormatError(f"{len(weights)} weight matrices for {len(biases)} bias vectors.")
        for index, (W, b) in enumerate(zip(weights, biases)):
            if W.shape[0] != b.shape[0] or (index > 0 and W.shape[1] != weights[index - 1].shape[0]):
                raise DataFormatError(f"Layer {index} has weights {W.shape} and biases {b.shape}; shapes do not chain.")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise DataFormatError(f"Layer {index} has non-finite parameters.")
            W.setflags(write=False)
            b.setflags(write=False)
        if self.input_scaler.dim != weights[0].shape[1] or self.output_scaler.dim != weights[-1].shape[0]:
            raise DataFormatError("Scalers do not match the network's input and output sizes.")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        """Input size, hidden sizes and output size."""
        return (self.weights[0].shape[1],) + tuple(W.shape[0] for W in self.weights)

    @property
    def activations(self) -> Tuple[str, ...]:
        """Activation of each layer."""
        return (TANH,) * (len(self.weights) - 1) + (LINEAR,)

    @property
    def n_inputs(self) -> int:
        """Input dimension."""
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        """Output dimension."""
        return self.layer_sizes[-1]


def _check_inputs(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.n_inputs:
        raise ExpressionError(f"Network expects {model.n_inputs} input(s), got {x.shape[-1]}.")
    return x


def _forward_scaled(weights, biases, a: np.ndarray) -> List[np.ndarray]:
    """Activations of every layer for scaled inputs ``a`` (the last one is linear)."""
    activations = [a]
    last = len(weights) - 1
    for index, (W, b) in enumerate(zip(weights, biases)):
        z = activations[-1] @ W.T + b
        activations.append(z if index == last else np.tanh(z))
    return activations


def forward(model: MlpModel, x) -> np.ndarray:
    """
    Network outputs in original units.

    Parameters
    ----------
    model : MlpModel
        The network.
    x : array
        One input (D,) or an (n, D) array, in original units.

    Returns
    -------
    numpy.ndarray
        (n_outputs,) or (n, n_outputs) outputs.

    >>> identity = Scaler.identity(1)
    >>> net = MlpModel(([[1.0]], [[1.0]]), ([0.0], [0.0]), identity, identity)
    >>> round(float(forward(net, [0.5])[0]), 6)
    0.462117
    """
    x = _check_inputs(model, x)
    X = apply_scaler(model.input_scaler, np.atleast_2d(x))
    y = invert_scaler(model.output_scaler, _forward_scaled(model.weights, model.biases, X)[-1])
    return y[0] if x.ndim == 1 else y


def gradient(model: MlpModel, x, output: int = 0) -> np.ndarray:
    """
    Gradient of one output with respect to the inputs, by backpropagation.

    Returns a (D,) vector for one input or an (n, D) array for several.
    """
    x = _check_inputs(model, x)
    X = apply_scaler(model.input_scaler, np.atleast_2d(x))
    activations = _forward_scaled(model.weights, model.biases, X)
    delta = np.zeros((X.shape[0], model.n_outputs))
    delta[:, output] = 1.0 / model.output_scaler.gains[output]
    for index in range(len(model.weights) - 1, -1, -1):
        delta = delta @ model.weights[index]
        if index > 0:
            delta = delta * (1.0 - activations[index] ** 2)
    grad = delta * model.input_scaler.gains
    return grad[0] if x.ndim == 1 else grad


@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch Adam settings."""

    batch_size: int = 128
    max_epochs: int = 4000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 7
    log_every: int = 500
    """Epochs between progress messages"""

    def __post_init__(self):  # noqa: D105
        if self.batch_size < 1 or self.max_epochs < 1 or self.log_every < 1:
            raise ConfigurationError("Batch size, epoch limit and log interval must be positive.")
        if not (self.learning_rate > 0 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.epsilon > 0):
            raise ConfigurationError("Invalid Adam hyperparameters.")


def _init_parameters(sizes: Sequence[int], rng: np.random.Generator):
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _backprop(weights, activations, residual):
    """Gradients of the mean squared error given the output residual."""
    n = residual.shape[0] * residual.shape[1]
    delta = 2.0 * residual / n
    grads_w, grads_b = [None] * len(weights), [None] * len(weights)
    for index in range(len(weights) - 1, -1, -1):
        grads_w[index] = delta.T @ activations[index]
        grads_b[index] = delta.sum(axis=0)
        if index > 0:
            delta = (delta @ weights[index]) * (1.0 - activations[index] ** 2)
    return grads_w, grads_b


def train_mlp(
    inputs,
    targets,
    hidden: Sequence[int],
    config: TrainConfig = TrainConfig(),
    log_path: Optional[str] = None,
) -> MlpModel:
    """
    Fit a tanh network by mini-batch Adam on the mean squared error.

    Inputs are scaled to [-1, 1] and targets to zero mean and unit variance;
    the loss is measured on scaled targets.

    Parameters
    ----------
    inputs : array
        (N, D) training inputs.
    targets : array
        (N,) or (N, K) training targets.
    hidden : sequence of int
        Hidden layer sizes, e.g. ``(6, 8)``.
    config : TrainConfig
        Optimizer settings.
    log_path : str, optional
        If given, a CSV with the mean loss of every epoch is written there.

    Returns
    -------
    MlpModel
        The trained network. Training is deterministic given ``config.seed``.

    Raises
    ------
    ConvergenceError
        If the loss becomes NaN or infinite, naming the epoch.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    Y = np.asarray(targets, dtype=float)
    Y = Y.reshape(-1, 1) if Y.ndim == 1 else Y
    if X.shape[0] != Y.shape[0] or X.shape[0] == 0:
        raise DataFormatError(f"{X.shape[0]} input row(s) for {Y.shape[0]} target row(s).")
    if any(int(h) < 1 for h in hidden):
        raise ConfigurationError(f"Hidden layer sizes must be positive, got {list(hidden)}.")
    input_scaler = fit_scaler(X, MINMAX)
    output_scaler = fit_scaler(Y, STANDARDIZE)
    Xs, Ys = apply_scaler(input_scaler, X), apply_scaler(output_scaler, Y)

    rng = np.random.default_rng(config.seed)
    sizes = [X.shape[1]] + [int(h) for h in hidden] + [Y.shape[1]]
    weights, biases = _init_parameters(sizes, rng)
    moments = [np.zeros_like(p) for p in weights + biases]
    velocities = [np.zeros_like(p) for p in weights + biases]
    step = 0
    history = []
    info(f"Training a {'-'.join(map(str, sizes))} network on {X.shape[0]} sample(s) for {config.max_epochs} epoch(s).")
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(X.shape[0])
        total = 0.0
        for start in range(0, X.shape[0], config.batch_size):
            batch = order[start:start + config.batch_size]
            activations = _forward_scaled(weights, biases, Xs[batch])
            residual = activations[-1] - Ys[batch]
            total += float(np.sum(residual**2))
            grads_w, grads_b = _backprop(weights, activations, residual)
            step += 1
            params = weights + biases
            for index, (param, grad) in enumerate(zip(params, grads_w + grads_b)):
                moments[index] = config.beta1 * moments[index] + (1.0 - config.beta1) * grad
                velocities[index] = config.beta2 * velocities[index] + (1.0 - config.beta2) * grad**2
                m_hat = moments[index] / (1.0 - config.beta1**step)
                v_hat = velocities[index] / (1.0 - config.beta2**step)
                param -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        loss = total / Ys.size
        if not math.isfinite(loss):
            raise ConvergenceError(f"Network training diverged at epoch {epoch} (loss {loss}).")
        history.append((epoch, loss))
        if epoch % config.log_every == 0:
            debug(f"Epoch {epoch}: scaled MSE {loss:.6g}.")

    model = MlpModel(tuple(weights), tuple(biases), input_scaler, output_scaler)
    info(f"Final scaled training MSE: {scaled_mse(model, X, Y):.6g}.")
    if log_path is not None:
        pd.DataFrame(history, columns=["epoch", "loss"]).to_csv(log_path, index=False, float_format="%.10g")
        debug(f'Wrote training log "{log_path}".')
    return model


def scaled_mse(model: MlpModel, inputs, targets) -> float:
    """Mean squared error measured on scaled targets."""
    Y = np.asarray(targets, dtype=float)
    Y = Y.reshape(-1, 1) if Y.ndim == 1 else Y
    predicted = np.atleast_2d(forward(model, np.atleast_2d(inputs)))
    residual = apply_scaler(model.output_scaler, predicted) - apply_scaler(model.output_scaler, Y)
    return float(np.mean(residual**2))


def mlp_to_dict(model: MlpModel) -> dict:
    """JSON-friendly layer list."""
    return {
        "schema": SCHEMA,
        "layer_sizes": list(model.layer_sizes),
        "activations": list(model.activations),
        "weights": list(model.weights),
        "biases": list(model.biases),
        "input_scaler": model.input_scaler.to_dict(),
        "output_scaler": model.output_scaler.to_dict(),
    }


def save_mlp(path: str, model: MlpModel):
    """Write a network as JSON."""
    write_json(path, mlp_to_dict(model))


def load_mlp(path: str) -> MlpModel:
    """Read a network written by :func:`save_mlp`."""
    try:
        data = read_json(path)
    except FileNotFoundError:
        raise DataFormatError(f'Network file "{path}" not found.') from None
    except ValueError as e:
        raise DataFormatError(f'Network file "{path}" is not valid JSON ({e}).') from None
    if not isinstance(data, dict) or data.get("schema") != SCHEMA:
        raise DataFormatError(f'"{path}" is not a network file (expected schema "{SCHEMA}").')
    try:
        activations = data["activations"]
        expected = [TANH] * (len(data["weights"]) - 1) + [LINEAR]
        if activations != expected:
            raise DataFormatError(f'Unsupported activations {activations} in "{path}".')
        return MlpModel(
            tuple(data["weights"]),
            tuple(data["biases"]),
            Scaler.from_dict(data["input_scaler"]),
            Scaler.from_dict(data["output_scaler"]),
        )
    except KeyError as e:
        raise DataFormatError(f'Network file "{path}" lacks the field {e}.') from None


def mlp_expression(model: MlpModel, inputs: Sequence[Expr], output: int = 0) -> Expr:
    """One network output as an expression of ``inputs``."""
    if not 0 <= output < model.n_outputs:
        raise ExpressionError(f"Output {output} requested from a network with {model.n_outputs} output(s).")
    return MlpOutput(
        model.weights,
        model.biases,
        model.input_scaler.offsets,
        model.input_scaler.gains,
        model.output_scaler.offsets[output],
        model.output_scaler.gains[output],
        inputs,
        output,
    )


# ---------------------------------------------------------------------------
# Peaks
# ---------------------------------------------------------------------------


def peaks(x1, x2):
    """
    The peaks function with an added linear slope in ``x2``.

    ``3(1-x1)^2 exp(-x1^2-(x2+1)^2) - 10(x1/5 - x1^3 - x2^5) exp(-x1^2-x2^2)
    - 1/3 exp(-(x1+1)^2-x2^2) - 1.3 x2``

    >>> round(float(peaks(0.0, 0.0)), 6)
    0.981012
    """
    x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
    return (
        3.0 * (1.0 - x1) ** 2 * np.exp(-(x1**2) - (x2 + 1.0) ** 2)
        - 10.0 * (x1 / 5.0 - x1**3 - x2**5) * np.exp(-(x1**2) - x2**2)
        - np.exp(-((x1 + 1.0) ** 2) - x2**2) / 3.0
        - 1.3 * x2
    )


def peaks_gradient(x1, x2) -> np.ndarray:
    """Analytic gradient of :func:`peaks`, stacked on the last axis."""
    x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
    e1 = np.exp(-(x1**2) - (x2 + 1.0) ** 2)
    e2 = np.exp(-(x1**2) - x2**2)
    e3 = np.exp(-((x1 + 1.0) ** 2) - x2**2)
    p = x1 / 5.0 - x1**3 - x2**5
    d1 = (
        3.0 * e1 * (-2.0 * (1.0 - x1) - 2.0 * x1 * (1.0 - x1) ** 2)
        - 10.0 * e2 * ((0.2 - 3.0 * x1**2) - 2.0 * x1 * p)
        + 2.0 * (x1 + 1.0) * e3 / 3.0
    )
    d2 = (
        -6.0 * (1.0 - x1) ** 2 * (x2 + 1.0) * e1
        - 10.0 * e2 * (-5.0 * x2**4 - 2.0 * x2 * p)
        + 2.0 * x2 * e3 / 3.0
        - 1.3
    )
    return np.stack([d1, d2], axis=-1)


def peaks_expression(x1, x2) -> Expr:
    """:func:`peaks` as an expression of two input expressions."""
    x1, x2 = as_expr(x1), as_expr(x2)
    x1_sq, x2_sq = Square(x1), Square(x2)
    bump = 3.0 * (Square(1.0 - x1) * Exp(-x1_sq - Square(x2 + 1.0)))
    ridge = -10.0 * ((x1 / 5.0 - x1 * x1_sq - x2 * Square(x2_sq)) * Exp(-x1_sq - x2_sq))
    dip = Exp(-Square(x1 + 1.0) - x2_sq) * (-1.0 / 3.0)
    return bump + ridge + dip - 1.3 * x2


if __name__ == "__main__":
    import doctest

    doctest.testmod()
