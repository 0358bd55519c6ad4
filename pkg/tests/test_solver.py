import math

import numpy as np
import pandas as pd
import pytest

from validity_domain import solver
from validity_domain.ann import peaks_expression
from validity_domain.datasets import PointCloud
from validity_domain.errors import ConfigurationError, DataFormatError
from validity_domain.hull import box_facets, facets_from_hull
from validity_domain.ocsvm import KernelSpec, decision, train
from validity_domain.relax import Box, Var, evaluate
from validity_domain.solver import (
    INFEASIBLE,
    NODE_LIMIT,
    OPTIMAL,
    RESOLUTION_LIMIT,
    RS,
    TIME_LIMIT,
    Problem,
    SolveOptions,
    SolveReport,
    grid_oracle,
    local_refine,
    read_report,
    solve,
    solve_reduced_space,
    validity_constraints,
    write_report,
)

X0, X1 = Var(0), Var(1)
TRIANGLE = facets_from_hull(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))


def _triangle_problem(**kwargs) -> Problem:
    return Problem(Box([-1.0, -1.0], [2.0, 2.0]), X0 + X1, TRIANGLE, **kwargs)


def _svm_problem() -> Problem:
    rng = np.random.default_rng(21)
    cloud = PointCloud(rng.normal(size=(40, 2)))
    model = train(cloud, 0.2, KernelSpec(0.5))
    return Problem(Box([-4.0, -4.0], [4.0, 4.0]), X0 - 0.5 * X1, model, name="svm")


def test_linear_objective_over_triangle():
    problem = _triangle_problem()
    report = solve_reduced_space(problem)
    assert report.status == OPTIMAL
    assert report.mode == RS
    assert abs(report.f_star) <= 1e-3
    assert report.lower_bound <= report.f_star + 1e-12
    assert report.f_star - report.lower_bound <= 1e-3 + 1e-12
    assert report.constraint_margin >= -1e-9
    assert problem.is_feasible(report.x_star)
    assert report.diagnostics["feasibility_tolerance"] == 1e-9


def test_unconstrained_quadratic_closes_at_root():
    problem = Problem(Box([-1.0, -1.0], [1.0, 1.0]), (X0 - 0.3) ** 2 + (X1 + 0.2) ** 2)
    report = solve(problem)
    assert report.status == OPTIMAL
    assert report.f_star == pytest.approx(0.0, abs=1e-8)
    assert np.allclose(report.x_star, [0.3, -0.2], atol=1e-4)
    assert math.isinf(report.constraint_margin)


def test_infeasible_problem():
    problem = Problem(Box([0.0, 0.0], [1.0, 1.0]), X0, box_facets([5.0, 5.0], [6.0, 6.0]))
    report = solve(problem)
    assert report.status == INFEASIBLE
    assert report.x_star is None
    assert math.isinf(report.f_star) and math.isinf(report.gap_abs)


def test_node_limit():
    report = solve(_triangle_problem(), SolveOptions(max_nodes=1))
    assert report.status == NODE_LIMIT
    assert report.nodes_processed == 1
    assert report.lower_bound < report.f_star


def test_time_limit():
    report = solve(_triangle_problem(), SolveOptions(time_limit=1e-9))
    assert report.status == TIME_LIMIT
    assert report.x_star is not None


def test_unsplittable_boxes_keep_the_gap_open(monkeypatch):
    monkeypatch.setattr(solver, "MIN_RELATIVE_WIDTH", 0.3)
    problem = Problem(Box([-3.0, -3.0], [3.0, 3.0]), peaks_expression(X0, X1), name="peaks")
    options = SolveOptions(abs_tol=1e-3, rel_tol=1e-3)
    report = solve_reduced_space(problem, options)
    assert report.status == RESOLUTION_LIMIT
    assert not report.is_optimal
    assert report.x_star is not None
    assert report.lower_bound < report.f_star
    assert report.gap_abs > options.tolerance(report.f_star)


def test_unsplittable_boxes_do_not_hide_infeasibility(monkeypatch):
    monkeypatch.setattr(solver, "MIN_RELATIVE_WIDTH", 0.3)
    problem = Problem(Box([0.0, 0.0], [1.0, 1.0]), X0, box_facets([5.0, 5.0], [6.0, 6.0]))
    assert solve_reduced_space(problem).status == INFEASIBLE


def test_solve_is_deterministic():
    first = solve(_triangle_problem(), SolveOptions(seed=3))
    second = solve(_triangle_problem(), SolveOptions(seed=3))
    assert np.array_equal(first.x_star, second.x_star)
    assert first.nodes_processed == second.nodes_processed
    assert first.incumbent_history == second.incumbent_history
    assert first.to_dict(timings=False) == second.to_dict(timings=False)


def test_trace_file(tmp_path):
    path = str(tmp_path / "trace.csv")
    report = solve(_triangle_problem(), SolveOptions(trace_path=path))
    trace = pd.read_csv(path)
    assert list(trace.columns) == ["node", "depth", "lower_bound", "incumbent", "lo1", "lo2", "hi1", "hi2"]
    assert len(trace) == report.nodes_processed
    assert trace["node"].tolist() == list(range(1, report.nodes_processed + 1))
    assert (trace["incumbent"].diff().dropna() <= 0).all()


def test_svm_constrained_solution_against_grid():
    problem = _svm_problem()
    options = SolveOptions()
    report = solve(problem, options)
    oracle = grid_oracle(problem, n=401)
    assert report.status == OPTIMAL
    assert decision(problem.validity, report.x_star) >= -1e-6 - 1e-12
    assert report.lower_bound <= oracle.best_value + 1e-9
    assert report.f_star <= oracle.best_value + options.tolerance(report.f_star) + 1e-9


@pytest.mark.slow
def test_peaks_against_grid():
    problem = Problem(Box([-3.0, -3.0], [3.0, 3.0]), peaks_expression(X0, X1), name="peaks")
    options = SolveOptions()
    report = solve(problem, options)
    oracle = grid_oracle(problem, n=801)
    assert report.status == OPTIMAL
    assert report.lower_bound <= oracle.best_value + 1e-9
    assert report.f_star <= oracle.best_value + options.tolerance(report.f_star) + 1e-9


def test_grid_oracle_on_triangle():
    oracle = grid_oracle(_triangle_problem(), n=31)
    assert oracle.n_feasible > 0
    assert -1e-12 <= oracle.value <= 0.2
    assert oracle.polished_value <= oracle.value + 1e-12
    assert oracle.best_value == min(oracle.value, oracle.polished_value)


def test_grid_oracle_size_cap():
    problem = Problem(Box([0.0] * 3, [1.0] * 3), X0)
    with pytest.raises(ConfigurationError):
        grid_oracle(problem, n=1001)


def test_local_refine_repairs_with_anchor():
    problem = _triangle_problem()
    x = local_refine(problem, [2.0, 2.0], anchor=[0.1, 0.1])
    assert x is not None
    assert problem.is_feasible(x)
    assert evaluate(problem.objective, x)[0] <= 0.2 + 1e-9


def test_local_refine_never_worsens_a_feasible_start():
    problem = _triangle_problem()
    start = np.array([0.2, 0.3])
    x = local_refine(problem, start, max_iter=1)
    assert problem.is_feasible(x)
    assert problem.assess(x)[0] <= problem.assess(start)[0]


def test_local_refine_without_feasible_point():
    problem = Problem(Box([0.0, 0.0], [1.0, 1.0]), X0, box_facets([5.0, 5.0], [6.0, 6.0]))
    assert local_refine(problem, [0.5, 0.5]) is None


def test_facet_constraints_are_nonnegative_inside():
    constraints = validity_constraints(TRIANGLE, [X0, X1])
    assert len(constraints) == 3
    assert all(evaluate(g, [0.2, 0.2])[0] > 0 for g in constraints)
    assert min(evaluate(g, [1.0, 1.0])[0] for g in constraints) < 0
    assert validity_constraints(None, [X0]) == ()


def test_problem_feasibility_helpers():
    problem = _triangle_problem(anchors=[[0.1, 0.1], [0.4, 0.1], [3.0, 3.0], [0.9, 0.9]])
    assert problem.feasible_anchors.tolist() == [[0.1, 0.1], [0.4, 0.1]]
    assert problem.nearest_anchor([0.5, 0.0]).tolist() == [0.4, 0.1]
    assert problem.margins([[0.2, 0.2], [1.0, 1.0]])[1] < 0
    assert problem.feasibility_tolerance == 1e-9


def test_problem_validation():
    with pytest.raises(ConfigurationError):
        Problem(Box([0.0], [1.0]), X0, TRIANGLE)
    with pytest.raises(ConfigurationError):
        Problem(Box([0.0, 0.0], [1.0, 1.0]), Var(2))
    with pytest.raises(ConfigurationError):
        Problem(Box([0.0, 0.0], [1.0, 1.0]), X0, anchors=[[0.0, 0.0, 0.0]])
    with pytest.raises(ConfigurationError):
        Problem(Box([0.0, 0.0], [1.0, 1.0]), X0, TRIANGLE, validity_inputs=(X0,))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"mode": "xs"},
        {"abs_tol": 0.0},
        {"rel_tol": -1.0},
        {"time_limit": 0.0},
        {"max_nodes": 0},
        {"relax_steps": -1},
        {"log_every": 0},
    ],
)
def test_solve_options_validation(kwargs):
    with pytest.raises(ConfigurationError):
        SolveOptions(**kwargs)


def test_tolerance():
    options = SolveOptions(abs_tol=1e-3, rel_tol=1e-2)
    assert options.tolerance(50.0) == pytest.approx(0.5)
    assert options.tolerance(0.01) == 1e-3
    assert options.tolerance(math.inf) == 0.0


def test_report_file(tmp_path):
    report = solve(_triangle_problem())
    path = str(tmp_path / "solve.json")
    write_report(path, report)
    loaded = read_report(path)
    assert loaded.status == report.status
    assert np.array_equal(loaded.x_star, report.x_star)
    assert loaded.f_star == report.f_star
    assert loaded.incumbent_history == report.incumbent_history
    assert loaded.cpu_seconds == report.cpu_seconds

    write_report(path, report, timings=False)
    stripped = read_report(path)
    assert math.isnan(stripped.cpu_seconds) and math.isnan(stripped.wall_seconds)


def test_report_of_infeasible_solve_round_trips():
    report = solve(Problem(Box([0.0, 0.0], [1.0, 1.0]), X0, box_facets([5.0, 5.0], [6.0, 6.0])))
    loaded = SolveReport.from_dict(report.to_dict())
    assert loaded.x_star is None and math.isinf(loaded.f_star)


def test_report_errors(tmp_path):
    with pytest.raises(DataFormatError):
        read_report(str(tmp_path / "missing.json"))
    with pytest.raises(DataFormatError):
        SolveReport.from_dict({"status": OPTIMAL})
