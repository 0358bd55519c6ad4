import numpy as np
import pandas as pd
import pytest

from validity_domain.ann import (
    MlpModel,
    TrainConfig,
    forward,
    gradient,
    load_mlp,
    mlp_expression,
    peaks,
    peaks_expression,
    peaks_gradient,
    save_mlp,
    scaled_mse,
    train_mlp,
)
from validity_domain.datasets import Scaler, fit_scaler
from validity_domain.errors import ConfigurationError, DataFormatError, ExpressionError
from validity_domain.relax import Box, Var, evaluate, evaluate_many, interval_eval, relax_eval


def _random_network(seed: int, sizes=(2, 6, 8, 1)) -> MlpModel:
    rng = np.random.default_rng(seed)
    weights = [rng.normal(size=(b, a)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [rng.normal(size=b) for b in sizes[1:]]
    input_scaler = fit_scaler([[-3.0] * sizes[0], [3.0] * sizes[0]])
    output_scaler = Scaler("standardize", rng.normal(size=sizes[-1]), rng.uniform(0.5, 2.0, size=sizes[-1]))
    return MlpModel(tuple(weights), tuple(biases), input_scaler, output_scaler)


def _peaks_samples(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-3.0, 3.0, size=(n, 2))
    return X, peaks(X[:, 0], X[:, 1])


def test_peaks_reference_values():
    assert float(peaks(0.0, 0.0)) == pytest.approx(0.981012, abs=1e-6)
    assert float(peaks(1.0, -1.0)) == pytest.approx(
        -10.0 * (0.2 - 1.0 + 1.0) * np.exp(-2.0) - np.exp(-5.0) / 3.0 + 1.3, abs=1e-12
    )


def test_peaks_gradient_matches_finite_differences():
    X, _ = _peaks_samples(25, seed=4)
    h = 1e-6
    numeric = np.stack(
        [(peaks(X[:, 0] + h, X[:, 1]) - peaks(X[:, 0] - h, X[:, 1])) / (2 * h),
         (peaks(X[:, 0], X[:, 1] + h) - peaks(X[:, 0], X[:, 1] - h)) / (2 * h)],
        axis=-1,
    )
    assert np.allclose(peaks_gradient(X[:, 0], X[:, 1]), numeric, atol=1e-6)


def test_peaks_expression_matches_function():
    X, y = _peaks_samples(100, seed=1)
    expr = peaks_expression(Var(0), Var(1))
    assert np.allclose(evaluate_many(expr, X), y, atol=1e-12)
    _, grad = evaluate(expr, X[0])
    assert np.allclose(grad, peaks_gradient(X[0, 0], X[0, 1]), atol=1e-10)


def test_peaks_relaxation_brackets_samples():
    expr = peaks_expression(Var(0), Var(1))
    box = Box([-0.5, -1.0], [0.5, 0.0])
    bounds = interval_eval(expr, box)
    X = np.stack(np.meshgrid(np.linspace(-0.5, 0.5, 11), np.linspace(-1.0, 0.0, 11)), -1).reshape(-1, 2)
    y = peaks(X[:, 0], X[:, 1])
    assert bounds.lo <= y.min() and y.max() <= bounds.hi
    for x, value in zip(X[::7], y[::7]):
        r = relax_eval(expr, box, x)
        assert r.cv <= value + 1e-9 and r.cc >= value - 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_network_gradient_matches_finite_differences(seed):
    net = _random_network(seed)
    rng = np.random.default_rng(seed + 10)
    X = rng.uniform(-3.0, 3.0, size=(10, 2))
    h = 1e-6
    numeric = np.stack(
        [(forward(net, X + h * e)[:, 0] - forward(net, X - h * e)[:, 0]) / (2 * h) for e in np.eye(2)], axis=-1
    )
    assert np.allclose(gradient(net, X), numeric, atol=1e-6)
    assert gradient(net, X[0]).shape == (2,)


def test_network_expression_matches_forward():
    net = _random_network(5, sizes=(3, 4, 4, 2))
    rng = np.random.default_rng(2)
    X = rng.uniform(-3.0, 3.0, size=(30, 3))
    inputs = [Var(k) for k in range(3)]
    for output in range(2):
        expr = mlp_expression(net, inputs, output)
        assert np.allclose(evaluate_many(expr, X), forward(net, X)[:, output], atol=1e-12)
        _, grad = evaluate(expr, X[0])
        assert np.allclose(grad, gradient(net, X[0], output), atol=1e-10)
    with pytest.raises(ExpressionError):
        mlp_expression(net, inputs, 2)


def test_network_relaxation_is_sound():
    net = _random_network(7)
    expr = mlp_expression(net, [Var(0), Var(1)])
    box = Box([-1.0, 0.5], [0.0, 2.0])
    rng = np.random.default_rng(3)
    X = rng.uniform(box.lo, box.hi, size=(40, 2))
    values = forward(net, X)[:, 0]
    bounds = interval_eval(expr, box)
    assert bounds.lo <= values.min() and values.max() <= bounds.hi
    for x, value in zip(X, values):
        r = relax_eval(expr, box, x)
        assert r.cv <= value + 1e-9 and r.cc >= value - 1e-9


def test_training_reduces_loss(tmp_path):
    X, y = _peaks_samples(300)
    log_path = str(tmp_path / "training.csv")
    net = train_mlp(X, y, (6, 8), TrainConfig(batch_size=64, max_epochs=200, learning_rate=1e-2), log_path)
    history = pd.read_csv(log_path)
    assert list(history.columns) == ["epoch", "loss"]
    assert len(history) == 200
    assert history["loss"].iloc[-1] < history["loss"].iloc[0]
    assert scaled_mse(net, X, y) < 0.8
    assert net.layer_sizes == (2, 6, 8, 1)


def test_training_is_deterministic():
    X, y = _peaks_samples(100)
    config = TrainConfig(batch_size=32, max_epochs=5, seed=11)
    first = train_mlp(X, y, (4,), config)
    second = train_mlp(X, y, (4,), config)
    assert all(np.array_equal(a, b) for a, b in zip(first.weights, second.weights))
    other = train_mlp(X, y, (4,), TrainConfig(batch_size=32, max_epochs=5, seed=12))
    assert not np.array_equal(first.weights[0], other.weights[0])


def test_training_rejects_bad_settings():
    X, y = _peaks_samples(10)
    with pytest.raises(DataFormatError):
        train_mlp(X, y[:5], (4,))
    with pytest.raises(ConfigurationError):
        train_mlp(X, y, (0,))
    with pytest.raises(ConfigurationError):
        TrainConfig(learning_rate=0.0)


def test_network_file(tmp_path):
    net = _random_network(9)
    path = str(tmp_path / "ann.json")
    save_mlp(path, net)
    loaded = load_mlp(path)
    assert loaded.layer_sizes == net.layer_sizes
    X = np.random.default_rng(0).uniform(-3.0, 3.0, size=(10, 2))
    assert np.array_equal(forward(loaded, X), forward(net, X))


def test_network_file_errors(tmp_path):
    with pytest.raises(DataFormatError):
        load_mlp(str(tmp_path / "missing.json"))
    wrong = tmp_path / "wrong.json"
    wrong.write_text('{"schema": "validity-domain/ocsvm@1"}')
    with pytest.raises(DataFormatError):
        load_mlp(str(wrong))


def test_network_shape_checks():
    identity = Scaler.identity(1)
    with pytest.raises(DataFormatError):
        MlpModel(([[1.0, 2.0]], [[1.0, 1.0]]), ([0.0], [0.0]), Scaler.identity(2), identity)
    net = MlpModel(([[1.0]], [[1.0]]), ([0.0], [0.0]), identity, identity)
    with pytest.raises(ExpressionError):
        forward(net, [1.0, 2.0])


def test_fits_a_line():
    x = np.linspace(-1.0, 1.0, 100)[:, None]
    y = 2.0 * x[:, 0]
    net = train_mlp(x, y, (4,), TrainConfig(batch_size=100, max_epochs=2000, learning_rate=1e-2))
    assert scaled_mse(net, x, y) < 2.5e-3
