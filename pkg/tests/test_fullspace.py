import math

import numpy as np
import pytest

from validity_domain.ann import MlpModel, mlp_expression
from validity_domain.datasets import PointCloud, Scaler, fit_scaler
from validity_domain.errors import ExpressionError
from validity_domain.fullspace import FullSpaceBounder, solve_full_space
from validity_domain.hull import box_facets, facets_from_hull
from validity_domain.ocsvm import KernelSpec, OneClassSvmModel, decision, train
from validity_domain.relax import Box, Var, evaluate_many, tanh
from validity_domain.solver import FS, INFEASIBLE, OPTIMAL, Node, Problem, SolveOptions, solve

X0, X1 = Var(0), Var(1)
TRIANGLE = facets_from_hull(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))


def _small_network(seed: int) -> MlpModel:
    rng = np.random.default_rng(seed)
    weights = (rng.normal(size=(4, 2)), rng.normal(size=(1, 4)))
    biases = (rng.normal(size=4), rng.normal(size=1))
    return MlpModel(weights, biases, fit_scaler([[-2.0, -2.0], [2.0, 2.0]]), Scaler("standardize", [0.0], [1.0]))


def _svm(seed: int = 21, n: int = 40) -> OneClassSvmModel:
    rng = np.random.default_rng(seed)
    return train(PointCloud(rng.normal(size=(n, 2))), 0.2, KernelSpec(0.5))


def test_linear_program_closes_at_root():
    problem = Problem(Box([-1.0, -1.0], [2.0, 2.0]), X0 + X1, TRIANGLE)
    report = solve(problem, SolveOptions(mode=FS))
    assert report.status == OPTIMAL
    assert report.mode == FS
    assert abs(report.f_star) <= 1e-3
    assert report.nodes_processed <= 2
    assert report.diagnostics["lifted_kernels"] == 0


def test_infeasible_facets():
    problem = Problem(Box([0.0, 0.0], [1.0, 1.0]), X0, box_facets([5.0, 5.0], [6.0, 6.0]))
    report = solve_full_space(problem, SolveOptions(mode=FS))
    assert report.status == INFEASIBLE
    assert report.x_star is None


@pytest.mark.slow
def test_svm_constraint_agrees_with_reduced_space():
    problem = Problem(Box([-4.0, -4.0], [4.0, 4.0]), X0 - 0.5 * X1, _svm())
    options = SolveOptions()
    rs = solve(problem, options)
    fs = solve(problem, SolveOptions(mode=FS))
    assert rs.status == OPTIMAL and fs.status == OPTIMAL
    assert decision(problem.validity, fs.x_star) >= -1e-6 - 1e-12
    assert abs(fs.f_star - rs.f_star) <= max(options.tolerance(rs.f_star), options.tolerance(fs.f_star)) + 1e-9
    assert fs.lower_bound <= rs.f_star + 1e-9
    assert rs.lower_bound <= fs.f_star + 1e-9
    m = problem.validity.n_support
    assert fs.diagnostics["lifted_distances"] == m
    assert fs.diagnostics["lp_columns"] == 2 + 2 * m + 1


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(3))
def test_network_objective_agrees_with_reduced_space(seed):
    problem = Problem(Box([-1.0, -1.0], [1.0, 1.0]), mlp_expression(_small_network(seed), [X0, X1]), TRIANGLE)
    rs = solve(problem, SolveOptions())
    fs = solve(problem, SolveOptions(mode=FS))
    assert rs.status == OPTIMAL and fs.status == OPTIMAL
    tol = max(1e-3, 1e-3 * abs(rs.f_star))
    assert abs(fs.f_star - rs.f_star) <= 2 * tol + 1e-9
    assert fs.diagnostics["lifted_networks"] == 1
    assert fs.diagnostics["lifted_neurons"] == 4


def test_network_hidden_neurons_are_lifted():
    expr = mlp_expression(_small_network(0), [X0, X1])
    problem = Problem(Box([-1.0, -1.0], [1.0, 1.0]), expr)
    bounder = FullSpaceBounder(problem, SolveOptions(mode=FS), 1e-9)
    root = bounder.root()
    # output, then 4 pre-activations, then 4 activations
    assert root.aux_lo.shape == (9,)
    assert np.all(root.aux_lo[5:] >= -1.0) and np.all(root.aux_hi[5:] <= 1.0)
    assert np.allclose(np.tanh(root.aux_lo[1:5]), root.aux_lo[5:])
    assert bounder.branchable.tolist() == [True] * 3 + [False] * 8
    assert bounder.bound(root)
    axis = np.linspace(-1.0, 1.0, 101)
    grid = np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2)
    assert root.lower_bound <= evaluate_many(expr, grid).min() + 1e-9
    diagnostics = bounder.diagnostics()
    assert diagnostics["lifted_networks"] == 1
    assert diagnostics["lifted_neurons"] == 4
    assert diagnostics["network_lifting"] == "neurons"
    assert diagnostics["formula_variables"] == diagnostics["lp_columns"] == 2 + 1 + 8 + 1


def test_network_with_nonaffine_inputs_lifts_the_output_only():
    problem = Problem(Box([-1.0, -1.0], [1.0, 1.0]), mlp_expression(_small_network(1), [tanh(X0), X1]))
    bounder = FullSpaceBounder(problem, SolveOptions(mode=FS), 1e-9)
    root = bounder.root()
    assert bounder.bound(root)
    diagnostics = bounder.diagnostics()
    assert diagnostics["lifted_neurons"] == 0
    assert diagnostics["network_lifting"] == "outputs"
    assert diagnostics["lp_columns"] == 2 + 1 + 1


def test_lifted_network_solve_matches_grid():
    expr = mlp_expression(_small_network(2), [X0, X1])
    problem = Problem(Box([-1.0, -1.0], [1.0, 1.0]), expr)
    options = SolveOptions(mode=FS)
    report = solve(problem, options)
    axis = np.linspace(-1.0, 1.0, 201)
    grid = np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2)
    best = evaluate_many(expr, grid).min()
    assert report.status == OPTIMAL
    assert report.lower_bound <= best + 1e-9
    assert report.f_star <= best + options.tolerance(report.f_star) + 1e-9


def test_bounder_root_tightens_kernel_bounds():
    model = _svm()
    problem = Problem(Box([-4.0, -4.0], [4.0, 4.0]), X0, model)
    bounder = FullSpaceBounder(problem, SolveOptions(mode=FS), 1e-6)
    root = bounder.root()
    m = model.n_support
    assert root.aux_lo.shape == (2 * m,)
    assert np.all(root.aux_lo[:m] >= 0.0)
    assert np.all(root.aux_hi[m:] <= 1.0 + 1e-12)
    assert bounder.bound(root)
    assert math.isfinite(root.lower_bound)
    assert root.lower_bound <= 4.0
    assert root.candidate is not None and problem.box.contains(root.candidate)


def test_bounder_discards_boxes_far_from_the_data():
    problem = Problem(Box([-4.0, -4.0], [4.0, 4.0]), X0, _svm())
    bounder = FullSpaceBounder(problem, SolveOptions(mode=FS), 1e-6)
    root = bounder.root()
    far = Node(Box([3.9, 3.9], [4.0, 4.0]), aux_lo=root.aux_lo.copy(), aux_hi=root.aux_hi.copy())
    assert not bounder.bound(far)


def test_kernel_inputs_must_be_affine():
    model = OneClassSvmModel([[0.0, 0.0]], [1.0], 0.5, KernelSpec(1.0), 0.5, 4)
    problem = Problem(Box([-1.0, -1.0], [1.0, 1.0]), X0, model, validity_inputs=(tanh(X0), X1))
    with pytest.raises(ExpressionError):
        solve(problem, SolveOptions(mode=FS))
