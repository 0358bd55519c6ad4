import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from validity_domain.errors import ExpressionError
from validity_domain.relax import (
    Box,
    Const,
    Exp,
    Interval,
    KernelExpansion,
    Linear,
    Rbf,
    SqDist,
    Var,
    absolute,
    affine_underestimators,
    constraint_bounds,
    envelope,
    evaluate,
    evaluate_many,
    exp,
    interval_eval,
    lower_bound_objective,
    rbf_term_relax,
    relax_batch,
    relax_eval,
    replace,
    tanh,
    upper_bound,
    variable_indices,
)

X0, X1 = Var(0), Var(1)

PRIMITIVES = {
    "exp": (exp(X0), np.exp),
    "tanh": (tanh(X0), np.tanh),
    "square": (X0**2, np.square),
    "abs": (absolute(X0), np.abs),
}

COMPOSITES = [
    X0 * X1,
    tanh(X0 * X1 + X0**2),
    exp(-0.5 * (X0 - 1) ** 2) - 2 * absolute(X1),
    tanh(2 * X0 - X1) * exp(0.3 * X1),
    Rbf([0.5, -0.5], 0.8, [X0, X1]),
    KernelExpansion([[0.0, 0.0], [1.0, 1.0], [-1.0, 0.5]], [0.5, 0.3, 0.2], 1.2, [X0, X1], -0.4),
    KernelExpansion([[0.0, 0.0], [1.0, -1.0]], [1.0, -0.7], 0.6, [X0, tanh(X1)]),
]

bounds_1d = st.tuples(
    st.floats(-4.0, 4.0),
    st.floats(0.0, 4.0),
    st.floats(0.0, 1.0),
)

bounds_2d = st.tuples(
    st.floats(-2.0, 2.0),
    st.floats(-2.0, 2.0),
    st.floats(0.0, 3.0),
    st.floats(0.0, 3.0),
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
)


def _tol(value: float) -> float:
    return 1e-9 * (1.0 + abs(value))


def _box_2d(params):
    a, b, wa, wb, ta, tb = params
    box = Box([a, b], [a + wa, b + wb])
    x = np.array([a + ta * wa, b + tb * wb])
    return box, box.clip(x)


@pytest.mark.parametrize("kind", sorted(PRIMITIVES))
@settings(max_examples=300, deadline=None)
@given(params=bounds_1d)
def test_primitive_relaxation_is_sound(kind, params):
    a, w, t = params
    expr, f = PRIMITIVES[kind]
    box = Box([a], [a + w])
    x = box.clip([a + t * w])
    value = float(f(x[0]))
    r = relax_eval(expr, box, x)
    assert float(r.lo) - _tol(value) <= r.cv <= value + _tol(value)
    assert value - _tol(value) <= r.cc <= float(r.hi) + _tol(value)
    assert interval_eval(expr, box).contains(value, _tol(value))


@pytest.mark.parametrize("kind", sorted(PRIMITIVES))
@settings(max_examples=150, deadline=None)
@given(params=bounds_1d, other=st.floats(0.0, 1.0))
def test_primitive_subgradients_give_affine_bounds(kind, params, other):
    a, w, t = params
    expr, f = PRIMITIVES[kind]
    box = Box([a], [a + w])
    x = box.clip([a + t * w])
    y = box.clip([a + other * w])
    r = relax_eval(expr, box, x)
    fy = float(f(y[0]))
    assert r.cv + float(r.cv_sub[0] * (y[0] - x[0])) <= fy + 1e-8 * (1.0 + abs(fy))
    assert r.cc + float(r.cc_sub[0] * (y[0] - x[0])) >= fy - 1e-8 * (1.0 + abs(fy))


@pytest.mark.parametrize("index", range(len(COMPOSITES)))
@settings(max_examples=150, deadline=None)
@given(params=bounds_2d)
def test_composite_relaxation_is_sound(index, params):
    expr = COMPOSITES[index]
    box, x = _box_2d(params)
    value, _ = evaluate(expr, x)
    r = relax_eval(expr, box, x)
    assert r.cv <= value + _tol(value)
    assert r.cc >= value - _tol(value)
    assert interval_eval(expr, box).contains(value, _tol(value))


@pytest.mark.parametrize("index", range(len(COMPOSITES)))
@settings(max_examples=60, deadline=None)
@given(params=bounds_2d)
def test_bounds_below_sampled_values(index, params):
    expr = COMPOSITES[index]
    box, _ = _box_2d(params)
    grid = np.stack(np.meshgrid(*[np.linspace(lo, hi, 9) for lo, hi in zip(box.lo, box.hi)]), -1).reshape(-1, 2)
    values = evaluate_many(expr, grid)
    lower = lower_bound_objective(expr, box)
    upper = upper_bound(expr, box)
    assert lower <= values.min() + _tol(values.min())
    assert upper >= values.max() - _tol(values.max())
    bounds = constraint_bounds(expr, box)
    assert bounds.lo <= values.min() + _tol(values.min())
    assert bounds.hi >= values.max() - _tol(values.max())
    for cut in affine_underestimators(expr, box):
        assert all(cut.at(p) <= v + 1e-8 * (1.0 + abs(v)) for p, v in zip(grid, values))


@settings(max_examples=200, deadline=None)
@given(params=bounds_2d, gamma=st.floats(0.05, 3.0), cx=st.floats(-2.0, 4.0), cy=st.floats(-2.0, 4.0))
def test_rbf_term_at_least_as_tight_as_plain_composition(params, gamma, cx, cy):
    box, x = _box_2d(params)
    center = [cx, cy]
    composite = rbf_term_relax(center, gamma, box, x)
    plain = relax_eval(Exp(Linear.combine([(-gamma, SqDist(center, [X0, X1]))])), box, x)
    value = math.exp(-gamma * ((x[0] - cx) ** 2 + (x[1] - cy) ** 2))
    assert composite.cv <= value + _tol(value) <= composite.cc + 2 * _tol(value)
    assert composite.cv >= plain.cv - 1e-9
    assert composite.cc <= plain.cc + 1e-9


def test_relaxation_tightens_on_smaller_boxes():
    expr = tanh(X0 * X1 + X0**2)
    x = [0.3, -0.2]
    wide = relax_eval(expr, Box([-2.0, -2.0], [2.0, 2.0]), x)
    narrow = relax_eval(expr, Box([0.2, -0.3], [0.4, -0.1]), x)
    assert narrow.cc - narrow.cv < wide.cc - wide.cv


def test_degenerate_box_is_exact():
    expr = exp(-0.5 * (X0 - 1) ** 2) - 2 * absolute(X1)
    x = [0.4, -0.7]
    value, _ = evaluate(expr, x)
    r = relax_eval(expr, Box(x, x), x)
    assert r.cv == pytest.approx(value, abs=1e-9)
    assert r.cc == pytest.approx(value, abs=1e-9)


def test_envelopes():
    env = envelope("square", -1.0, 2.0)
    assert float(env.cc(0.0)[0]) == pytest.approx(2.0)
    assert float(env.cv(0.5)[0]) == pytest.approx(0.25)
    env = envelope("tanh", -2.0, 2.0)
    z = np.linspace(-2.0, 2.0, 41)
    assert np.all(env.cv(z)[0] <= np.tanh(z) + 1e-12)
    assert np.all(env.cc(z)[0] >= np.tanh(z) - 1e-12)
    with pytest.raises(ExpressionError):
        envelope("log", 1.0, 2.0)


def test_relax_batch_matches_pointwise():
    expr = COMPOSITES[2]
    box = Box([-1.0, -1.0], [1.5, 0.5])
    points = np.array([[-1.0, -1.0], [0.0, 0.0], [1.2, 0.3]])
    batch = relax_batch(expr, box, points)
    for k, p in enumerate(points):
        single = relax_eval(expr, box, p)
        assert batch.cv[k] == pytest.approx(single.cv)
        assert batch.cc[k] == pytest.approx(single.cc)


def test_gradients_match_finite_differences():
    x = np.array([0.3, -0.6])
    h = 1e-6
    for expr in COMPOSITES:
        _, grad = evaluate(expr, x)
        numeric = [(evaluate(expr, x + h * e)[0] - evaluate(expr, x - h * e)[0]) / (2 * h) for e in np.eye(2)]
        assert np.allclose(grad, numeric, atol=1e-7)


def test_box_operations():
    box = Box([0.0, -1.0], [2.0, 1.0])
    assert box.volume == 4.0
    assert box.midpoint.tolist() == [1.0, 0.0]
    assert box.contains([2.0, 1.0]) and not box.contains([2.1, 0.0])
    left, right = box.split(1, at=0.5)
    assert left.hi.tolist() == [2.0, 0.5] and right.lo.tolist() == [0.0, 0.5]
    assert Box.from_intervals(box.intervals()).lo.tolist() == box.lo.tolist()
    with pytest.raises(ExpressionError):
        Box([1.0], [0.0])
    with pytest.raises(ExpressionError):
        Interval(1.0, 0.0)


def test_expression_errors():
    with pytest.raises(ExpressionError):
        relax_eval(X0, Box([0.0], [1.0]), [2.0])
    with pytest.raises(ExpressionError):
        interval_eval(X1, Box([0.0], [1.0]))
    with pytest.raises(ExpressionError):
        X0 ** 3
    with pytest.raises(ExpressionError):
        X0 / X1
    with pytest.raises(ExpressionError):
        Rbf([0.0], -1.0, [X0])


def test_linear_folding_and_graph_helpers():
    expr = 2 * (X0 + 3) - Const(1.0)
    assert isinstance(expr, Linear)
    assert expr.constant == 5.0
    assert variable_indices(tanh(X0 * Var(3))) == [0, 3]
    swapped = replace(tanh(X0 + X1), lambda node: Var(2) if isinstance(node, Var) and node.index == 1 else None)
    assert variable_indices(swapped) == [0, 2]
    assert evaluate(swapped, [1.0, 9.0, -1.0])[0] == pytest.approx(0.0)
