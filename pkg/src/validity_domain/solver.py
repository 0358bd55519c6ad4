"""
Deterministic global optimization of surrogate objectives under validity constraints.

A :class:`Problem` minimizes an expression over a box subject to the
validity constraint of a one-class SVM (decision function >= 0) or of a
facet system (every facet row <= 0). :func:`branch_and_bound` runs a
best-first spatial branch-and-bound; the node bounds come from a
:class:`Bounder`, either the reduced-space one defined here (McCormick
relaxations over the degrees of freedom only) or the full-space one of
:mod:`validity_domain.fullspace`.
"""

import heapq
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from .errors import ConfigurationError, DataFormatError
from .hull import FacetSystem
from .log import debug, info, warn
from .ocsvm import OneClassSvmModel, decision_expression
from .relax import (
    Box,
    Expr,
    Linear,
    Var,
    as_expr,
    evaluate,
    evaluate_many,
    interval_eval,
    lower_bound_objective,
    upper_bound,
    variable_indices,
)
from .utils import Stopwatch, as_float, read_json, write_json

RS = "rs"
FS = "fs"
MODES = (RS, FS)

OPTIMAL = "optimal"
TIME_LIMIT = "time_limit"
INFEASIBLE = "infeasible"
NODE_LIMIT = "node_limit"
RESOLUTION_LIMIT = "resolution_limit"
"""Boxes reached the minimum width with the gap still open"""

SVM_FEASIBILITY_TOL = 1e-6
FACET_FEASIBILITY_TOL = 1e-9
MIN_RELATIVE_WIDTH = 1e-10
"""Boxes narrower than this (relative to the root) are not split further"""

Validity = Union[None, FacetSystem, OneClassSvmModel]


def validity_constraints(validity: Validity, inputs: Sequence[Expr]) -> Tuple[Expr, ...]:
    """
    Constraint expressions ``g(x) >= 0`` describing a validity model.

    A one-class SVM gives its decision function; a facet system gives
    ``-(a . u + b)`` per facet.
    """
    if validity is None:
        return ()
    if isinstance(validity, OneClassSvmModel):
        return (decision_expression(validity, inputs),)
    if isinstance(validity, FacetSystem):
        return tuple(
            Linear.combine([(-a, u) for a, u in zip(row, inputs) if a != 0.0], -offset)
            for row, offset in zip(validity.A, validity.b)
        )
    raise ConfigurationError(f"Unsupported validity model {type(validity).__name__}.")


@dataclass(frozen=True, eq=False)
class Problem:
    """Minimize ``objective`` over ``box`` subject to the validity constraint."""

    box: Box
    objective: Expr
    validity: Validity = None
    validity_inputs: Optional[Tuple[Expr, ...]] = None
    """Expressions fed to the validity model (default: the variables)"""
    fixed_parameters: Mapping[str, float] = field(default_factory=dict)
    """Named constants baked into the expressions, for the record"""
    anchors: Optional[np.ndarray] = None
    """Points believed feasible, used as local-search starts and projection targets"""
    name: str = "problem"
    constraints: Tuple[Expr, ...] = field(init=False, default=())

    def __post_init__(self):  # noqa: D105
        dim = self.box.dim
        object.__setattr__(self, "objective", as_expr(self.objective))
        if self.validity is not None:
            inputs = self.validity_inputs
            inputs = tuple(Var(k) for k in range(dim)) if inputs is None else tuple(as_expr(u) for u in inputs)
            if len(inputs) != self.validity.dim:
                raise ConfigurationError(
                    f"{len(inputs)} validity input(s) for a {self.validity.dim}-dimensional validity model."
                )
            object.__setattr__(self, "validity_inputs", inputs)
            object.__setattr__(self, "constraints", validity_constraints(self.validity, inputs))
        for expr in (self.objective,) + self.constraints:
            indices = variable_indices(expr)
            if indices and indices[-1] >= dim:
                raise ConfigurationError(f"Expression reads x{indices[-1]} but the box has {dim} dimension(s).")
        if self.anchors is not None:
            anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))
            if anchors.shape[1] != dim:
                raise ConfigurationError(f"Anchor points of dimension {anchors.shape[1]} for {dim} variable(s).")
            object.__setattr__(self, "anchors", anchors)

    @property
    def dim(self) -> int:
        """Number of degrees of freedom."""
        return self.box.dim

    @property
    def feasibility_tolerance(self) -> float:
        """Default constraint tolerance of the validity model."""
        return FACET_FEASIBILITY_TOL if isinstance(self.validity, FacetSystem) else SVM_FEASIBILITY_TOL

    def margins(self, X) -> np.ndarray:
        """Smallest constraint value at each row of ``X`` (infinite without constraints)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        margin = np.full(X.shape[0], math.inf)
        for g in self.constraints:
            margin = np.minimum(margin, evaluate_many(g, X))
        return margin

    def assess(self, x) -> Tuple[float, float]:
        """Objective value and constraint margin at ``x``."""
        value = evaluate(self.objective, x)[0]
        margin = min((evaluate(g, x)[0] for g in self.constraints), default=math.inf)
        return value, margin

    def is_feasible(self, x, tol: Optional[float] = None) -> bool:
        """Whether ``x`` lies in the box and satisfies the constraints within ``tol``."""
        tol = self.feasibility_tolerance if tol is None else tol
        return self.box.contains(x, 1e-12) and self.assess(x)[1] >= -tol

    @cached_property
    def feasible_anchors(self) -> np.ndarray:
        """Anchors inside the box that satisfy the constraints, best objective first."""
        if self.anchors is None:
            return np.empty((0, self.dim))
        inside = self.anchors[[self.box.contains(a) for a in self.anchors]]
        if inside.shape[0] == 0:
            return inside
        inside = inside[self.margins(inside) >= 0.0]
        return inside[np.argsort(evaluate_many(self.objective, inside), kind="stable")]

    def nearest_anchor(self, x) -> Optional[np.ndarray]:
        """Feasible anchor closest to ``x``, if any."""
        anchors = self.feasible_anchors
        if anchors.shape[0] == 0:
            return None
        return anchors[int(np.argmin(np.sum((anchors - np.asarray(x)) ** 2, axis=1)))]


# ---------------------------------------------------------------------------
# Local search
# ---------------------------------------------------------------------------


def _project(problem: Problem, anchor: np.ndarray, x: np.ndarray, tol: float, steps: int = 50) -> Optional[np.ndarray]:
    """Furthest feasible point on the segment from a feasible ``anchor`` towards ``x``."""
    if not problem.is_feasible(anchor, tol):
        return None
    inside, outside = 0.0, 1.0
    for _ in range(steps):
        t = 0.5 * (inside + outside)
        if problem.is_feasible(anchor + t * (x - anchor), tol):
            inside = t
        else:
            outside = t
    return anchor + inside * (x - anchor)


def local_refine(
    problem: Problem,
    x0,
    anchor=None,
    feas_tol: Optional[float] = None,
    max_iter: int = 100,
) -> Optional[np.ndarray]:
    """
    Improve ``x0`` by local optimization and return a feasible point, if one is found.

    SLSQP handles the constraints (L-BFGS-B is used without them). A final
    iterate that violates the constraints is pulled back by bisection along
    the segment from the feasible ``anchor``. The returned point is never
    worse than ``x0`` when ``x0`` itself is feasible.

    Parameters
    ----------
    problem : Problem
        The problem.
    x0 : array
        Starting point, clipped to the box.
    anchor : array, optional
        A feasible point used to repair infeasible iterates.
    feas_tol : float, optional
        Constraint tolerance (default: the problem's).
    max_iter : int
        Iteration cap of the local solver.

    Returns
    -------
    numpy.ndarray or None
        A feasible point, or None.
    """
    tol = problem.feasibility_tolerance if feas_tol is None else feas_tol
    box = problem.box
    x0 = box.clip(x0)
    bounds = list(zip(box.lo, box.hi))

    def objective(x):
        return evaluate(problem.objective, x)

    try:
        if problem.constraints:
            constraints = [
                {"type": "ineq", "fun": lambda x, g=g: evaluate(g, x)[0], "jac": lambda x, g=g: evaluate(g, x)[1]}
                for g in problem.constraints
            ]
            result = minimize(objective, x0, jac=True, method="SLSQP", bounds=bounds, constraints=constraints,
                              options={"maxiter": max_iter, "ftol": 1e-12})
        else:
            result = minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=bounds, options={"maxiter": max_iter})
        x1 = box.clip(result.x) if np.all(np.isfinite(result.x)) else None
    except (ValueError, ArithmeticError) as e:
        debug(f"Local search from {x0.tolist()} failed: {e}")
        x1 = None

    candidates = []
    if problem.is_feasible(x0, tol):
        candidates.append(x0)
    if x1 is not None:
        if problem.is_feasible(x1, tol):
            candidates.append(x1)
        elif anchor is not None:
            repaired = _project(problem, box.clip(anchor), x1, tol)
            if repaired is not None:
                candidates.append(repaired)
    if not candidates:
        return None
    return min(candidates, key=lambda x: problem.assess(x)[0])


# ---------------------------------------------------------------------------
# Branch and bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolveOptions:
    """Branch-and-bound settings."""

    mode: str = RS
    abs_tol: float = 1e-3
    rel_tol: float = 1e-3
    time_limit: float = 1000.0
    """CPU seconds"""
    feas_tol: Optional[float] = None
    """Constraint tolerance (default: 1e-6 for SVMs, 1e-9 for facets)"""
    max_nodes: Optional[int] = None
    relax_steps: int = 5
    """Subgradient improvement steps per bound"""
    local_starts: int = 8
    local_every: int = 200
    """Nodes between local searches from the current node"""
    seed: int = 7
    trace_path: Optional[str] = None
    log_every: int = 2000
    """Nodes between progress log lines"""

    def __post_init__(self):  # noqa: D105
        if self.mode not in MODES:
            raise ConfigurationError(f'Unknown solver mode "{self.mode}"; expected one of {", ".join(MODES)}.')
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ConfigurationError("Optimality tolerances must be positive.")
        if not self.time_limit > 0:
            raise ConfigurationError("The time limit must be positive.")
        if self.max_nodes is not None and self.max_nodes < 1:
            raise ConfigurationError("The node limit must be positive.")
        if self.relax_steps < 0 or self.local_starts < 0 or self.local_every < 0 or self.log_every < 1:
            raise ConfigurationError("Step, start and interval counts must not be negative.")

    def tolerance(self, incumbent: float) -> float:
        """Pruning tolerance ``max(abs_tol, rel_tol |incumbent|)``."""
        if not math.isfinite(incumbent):
            return 0.0
        return max(self.abs_tol, self.rel_tol * abs(incumbent))


@dataclass(eq=False)
class Node:
    """A box of the branch-and-bound tree."""

    box: Box
    depth: int = 0
    lower_bound: float = -math.inf
    feasible: bool = False
    """The whole box satisfies the constraints"""
    aux_lo: Optional[np.ndarray] = None
    """Bounds of auxiliary variables (full space only)"""
    aux_hi: Optional[np.ndarray] = None
    candidate: Optional[np.ndarray] = None
    """A promising point found while bounding"""


def relative_widths(widths: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """``widths / reference``, zero where the reference width is zero."""
    return np.divide(widths, reference, out=np.zeros_like(widths, dtype=float), where=reference > 0)


class Bounder:
    """Bounding and branching of one formulation."""

    mode = ""

    def root(self) -> Node:
        """The root node."""
        raise NotImplementedError

    def bound(self, node: Node) -> bool:
        """Set ``node.lower_bound``; False when the node is proven infeasible."""
        raise NotImplementedError

    def branch(self, node: Node) -> Tuple[Node, Node]:
        """Split a node in two."""
        raise NotImplementedError

    def can_branch(self, node: Node) -> bool:
        """Whether the node is still wide enough to split."""
        return True

    def diagnostics(self) -> dict:
        """Formulation statistics for the report."""
        return {}


class ReducedSpaceBounder(Bounder):
    """
    Bounds over the degrees of freedom only.

    Nodes are discarded when an upper bound of a constraint is negative;
    the objective lower bound minimizes affine underestimators of its
    McCormick relaxation over the box.
    """

    mode = RS

    def __init__(self, problem: Problem, options: SolveOptions, feas_tol: float):  # noqa: D107
        self.problem = problem
        self.options = options
        self.feas_tol = feas_tol
        self.root_widths = problem.box.widths

    def root(self) -> Node:  # noqa: D102
        return Node(self.problem.box)

    def bound(self, node: Node) -> bool:  # noqa: D102
        feasible = True
        for g in self.problem.constraints:
            bounds = interval_eval(g, node.box)
            if bounds.lo >= 0.0:
                continue
            feasible = False
            if bounds.hi < -self.feas_tol or upper_bound(g, node.box, self.options.relax_steps) < -self.feas_tol:
                return False
        node.feasible = feasible
        node.lower_bound = lower_bound_objective(self.problem.objective, node.box, self.options.relax_steps)
        return True

    def can_branch(self, node: Node) -> bool:  # noqa: D102
        return float(relative_widths(node.box.widths, self.root_widths).max()) > MIN_RELATIVE_WIDTH

    def branch(self, node: Node) -> Tuple[Node, Node]:  # noqa: D102
        dim = int(np.argmax(relative_widths(node.box.widths, self.root_widths)))
        left, right = node.box.split(dim)
        return Node(left, node.depth + 1), Node(right, node.depth + 1)

    def diagnostics(self) -> dict:  # noqa: D102
        return {"variables": self.problem.dim, "constraints": len(self.problem.constraints)}


class _Incumbent:
    """Best feasible point seen so far."""

    def __init__(self, problem: Problem, feas_tol: float):  # noqa: D107
        self.problem = problem
        self.feas_tol = feas_tol
        self.x: Optional[np.ndarray] = None
        self.value = math.inf
        self.margin = math.nan
        self.history: List[Tuple[int, float]] = []
        self.node = 0

    def offer(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        value, margin = self.problem.assess(x)
        if margin >= -self.feas_tol and value < self.value and self.problem.box.contains(x, 1e-12):
            self.x, self.value, self.margin = x.copy(), value, margin
            self.history.append((self.node, value))
            debug(f"New incumbent {value:.10g} at node {self.node}.")
            return True
        return False

    def refine(self, x0):
        anchor = self.x if self.x is not None else self.problem.nearest_anchor(x0)
        refined = local_refine(self.problem, x0, anchor, self.feas_tol)
        if refined is not None:
            self.offer(refined)


def _start_points(problem: Problem, rng: np.random.Generator, count: int) -> List[np.ndarray]:
    box = problem.box
    starts = [box.midpoint]
    if count > 1:
        starts.extend(rng.uniform(box.lo, box.hi, size=(count - 1, box.dim)))
    starts.extend(problem.feasible_anchors[:count])
    return starts


def _entry(node: Node, counter) -> tuple:
    return (node.lower_bound, -node.box.volume, next(counter), node)


@dataclass
class SolveReport:
    """Outcome of a branch-and-bound run."""

    status: str
    mode: str
    x_star: Optional[np.ndarray]
    f_star: float
    lower_bound: float
    gap_abs: float
    gap_rel: float
    nodes_processed: int
    cpu_seconds: float
    wall_seconds: float
    constraint_margin: float
    """Smallest constraint value at ``x_star``"""
    incumbent_history: List[Tuple[int, float]] = field(default_factory=list)
    """(node, value) each time the incumbent improved"""
    diagnostics: Dict = field(default_factory=dict)

    @property
    def is_optimal(self) -> bool:
        """Whether the gap was closed."""
        return self.status == OPTIMAL

    def to_dict(self, timings: bool = True) -> dict:
        """JSON-friendly representation; ``timings=False`` drops the run-dependent fields."""
        data = {
            "status": self.status,
            "mode": self.mode,
            "x_star": None if self.x_star is None else list(self.x_star),
            "f_star": self.f_star,
            "lower_bound": self.lower_bound,
            "gap_abs": self.gap_abs,
            "gap_rel": self.gap_rel,
            "nodes_processed": self.nodes_processed,
            "constraint_margin": self.constraint_margin,
            "incumbent_history": [list(h) for h in self.incumbent_history],
            "diagnostics": self.diagnostics,
        }
        if timings:
            data["cpu_seconds"] = self.cpu_seconds
            data["wall_seconds"] = self.wall_seconds
        return data

    @classmethod
    def from_dict(cls, data: Mapping) -> "SolveReport":
        """Inverse of :meth:`to_dict`."""
        try:
            return cls(
                data["status"],
                data["mode"],
                None if data["x_star"] is None else np.array(data["x_star"], dtype=float),
                as_float(data["f_star"]),
                as_float(data["lower_bound"]),
                as_float(data["gap_abs"]),
                as_float(data["gap_rel"]),
                int(data["nodes_processed"]),
                as_float(data.get("cpu_seconds", math.nan)),
                as_float(data.get("wall_seconds", math.nan)),
                as_float(data["constraint_margin"]),
                [(int(n), as_float(v)) for n, v in data.get("incumbent_history", [])],
                dict(data.get("diagnostics", {})),
            )
        except KeyError as e:
            raise DataFormatError(f"Solve report lacks the field {e}.") from None


def write_report(path: str, report: SolveReport, timings: bool = True):
    """Write a report as JSON."""
    write_json(path, report.to_dict(timings))


def read_report(path: str) -> SolveReport:
    """Read a report written by :func:`write_report`."""
    try:
        return SolveReport.from_dict(read_json(path))
    except FileNotFoundError:
        raise DataFormatError(f'Solve report "{path}" not found.') from None


def _write_trace(path: str, rows: List[list], dim: int):
    columns = ["node", "depth", "lower_bound", "incumbent"]
    columns += [f"lo{k + 1}" for k in range(dim)] + [f"hi{k + 1}" for k in range(dim)]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format="%.12g")
    debug(f'Wrote node trace "{path}".')


def branch_and_bound(problem: Problem, options: SolveOptions, bounder: Bounder) -> SolveReport:
    """
    Best-first branch-and-bound with the bounds of ``bounder``.

    Nodes are processed by increasing lower bound (larger boxes first on
    ties, then in creation order). Children whose bound is within the
    tolerance of the incumbent are pruned. Incumbents come from box
    midpoints, relaxation candidates and periodic local searches.

    Boxes the bounder refuses to split are set aside with their bound. When
    the queue runs dry the run is optimal only if the remaining gap is within
    the tolerance, and infeasible only if no such box is left; otherwise the
    status is ``resolution_limit``.
    """
    feas_tol = problem.feasibility_tolerance if options.feas_tol is None else options.feas_tol
    incumbent = _Incumbent(problem, feas_tol)
    rng = np.random.default_rng(options.seed)
    counter = itertools.count()
    trace: Optional[List[list]] = [] if options.trace_path else None
    info(f'Solving "{problem.name}" in {bounder.mode.upper()} mode: {problem.dim} variable(s), '
         f"{len(problem.constraints)} constraint(s).")

    heap: list = []
    pruned = math.inf
    unresolved = math.inf
    nodes = 0
    status = None
    with Stopwatch() as watch:
        root = bounder.root()
        if bounder.bound(root):
            incumbent.offer(root.box.midpoint)
            if root.candidate is not None:
                incumbent.offer(root.candidate)
            for x0 in _start_points(problem, rng, options.local_starts):
                incumbent.refine(x0)
            heapq.heappush(heap, _entry(root, counter))

        while heap:
            node = heap[0][-1]
            if node.lower_bound >= incumbent.value - options.tolerance(incumbent.value):
                break
            if watch.elapsed()[0] > options.time_limit:
                status = TIME_LIMIT
                break
            if options.max_nodes is not None and nodes >= options.max_nodes:
                status = NODE_LIMIT
                break
            heapq.heappop(heap)
            nodes += 1
            incumbent.node = nodes
            if trace is not None:
                trace.append([nodes, node.depth, node.lower_bound, incumbent.value]
                             + node.box.lo.tolist() + node.box.hi.tolist())
            if options.local_every and nodes % options.local_every == 0:
                incumbent.refine(node.candidate if node.candidate is not None else node.box.midpoint)
            if nodes % options.log_every == 0:
                debug(f"{nodes} node(s), {len(heap)} open, bound {node.lower_bound:.8g}, "
                      f"incumbent {incumbent.value:.8g}.")
            if not bounder.can_branch(node):
                unresolved = min(unresolved, node.lower_bound)
                continue
            for child in bounder.branch(node):
                if not bounder.bound(child):
                    continue
                incumbent.offer(child.box.midpoint)
                if child.candidate is not None:
                    incumbent.offer(child.candidate)
                if child.lower_bound >= incumbent.value - options.tolerance(incumbent.value):
                    pruned = min(pruned, child.lower_bound)
                    continue
                heapq.heappush(heap, _entry(child, counter))

    lower = min([pruned, unresolved] + ([heap[0][0]] if heap else []))
    if incumbent.x is not None:
        lower = min(lower, incumbent.value)
    gap_abs = incumbent.value - lower if incumbent.x is not None and math.isfinite(lower) else math.inf
    gap_rel = gap_abs / max(abs(incumbent.value), 1e-12) if math.isfinite(gap_abs) else math.inf
    if status is None:
        if incumbent.x is None:
            status = INFEASIBLE if math.isinf(unresolved) else RESOLUTION_LIMIT
        elif gap_abs <= options.tolerance(incumbent.value) + 1e-12 * (1.0 + abs(incumbent.value)):
            status = OPTIMAL
        else:
            status = RESOLUTION_LIMIT
    if trace is not None:
        _write_trace(options.trace_path, trace, problem.dim)

    diagnostics = dict(bounder.diagnostics())
    diagnostics["feasibility_tolerance"] = feas_tol
    if problem.fixed_parameters:
        diagnostics["fixed_parameters"] = dict(problem.fixed_parameters)
    report = SolveReport(
        status,
        bounder.mode,
        incumbent.x,
        incumbent.value,
        lower,
        gap_abs,
        gap_rel,
        nodes,
        watch.cpu_seconds,
        watch.wall_seconds,
        incumbent.margin,
        incumbent.history,
        diagnostics,
    )
    message = (f'"{problem.name}" {bounder.mode.upper()}: {status}, f* = {incumbent.value:.8g}, '
               f"bound {lower:.8g}, {nodes} node(s), {watch.cpu_seconds:.2f} s.")
    if status in (OPTIMAL, INFEASIBLE):
        info(message)
    else:
        warn(message)
    return report


def solve_reduced_space(problem: Problem, options: SolveOptions = SolveOptions()) -> SolveReport:
    """
    Solve in the reduced space: branch and bound over the degrees of freedom only.

    Parameters
    ----------
    problem : Problem
        The problem.
    options : SolveOptions
        Tolerances, limits and search settings.

    Returns
    -------
    SolveReport
        ``status`` is ``optimal`` when the gap closed, ``infeasible`` when
        every node was discarded without a feasible point, ``time_limit`` or
        ``node_limit`` when a limit stopped the search, and
        ``resolution_limit`` when boxes too narrow to split still hold the
        gap open.
    """
    feas_tol = problem.feasibility_tolerance if options.feas_tol is None else options.feas_tol
    return branch_and_bound(problem, options, ReducedSpaceBounder(problem, options, feas_tol))


def solve(problem: Problem, options: SolveOptions = SolveOptions()) -> SolveReport:
    """Solve with the formulation named by ``options.mode``."""
    if options.mode == FS:
        from .fullspace import solve_full_space

        return solve_full_space(problem, options)
    return solve_reduced_space(problem, options)


# ---------------------------------------------------------------------------
# Brute-force reference
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleResult:
    """Best feasible grid point, optionally polished by local search."""

    x: Optional[np.ndarray]
    value: float
    n_feasible: int
    polished_x: Optional[np.ndarray] = None
    polished_value: float = math.inf

    @property
    def best_value(self) -> float:
        """The better of the grid and polished values."""
        return min(self.value, self.polished_value)


def grid_oracle(problem: Problem, n: int = 2001, polish: bool = True, chunk: int = 16384) -> OracleResult:
    """
    Evaluate the problem on a regular grid with ``n`` points per dimension.

    Grid points count as feasible when every constraint is nonnegative.
    With ``polish`` the best grid point is refined by :func:`local_refine`.
    """
    total = n ** problem.dim
    if total > 50_000_000:
        raise ConfigurationError(f"A grid of {n}^{problem.dim} points is too large for the oracle.")
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(problem.box.lo, problem.box.hi)]
    best_x, best_value, n_feasible = None, math.inf, 0
    for start in range(0, total, chunk):
        indices = np.unravel_index(np.arange(start, min(start + chunk, total)), (n,) * problem.dim)
        X = np.column_stack([axis[i] for axis, i in zip(axes, indices)])
        feasible = problem.margins(X) >= 0.0
        n_feasible += int(np.count_nonzero(feasible))
        if not np.any(feasible):
            continue
        values = np.where(feasible, evaluate_many(problem.objective, X), math.inf)
        k = int(np.argmin(values))
        if values[k] < best_value:
            best_x, best_value = X[k].copy(), float(values[k])
    if best_x is None or not polish:
        return OracleResult(best_x, best_value, n_feasible)
    polished = local_refine(problem, best_x, best_x, 0.0)
    polished_value = evaluate(problem.objective, polished)[0] if polished is not None else math.inf
    return OracleResult(best_x, best_value, n_feasible, polished, polished_value)


if __name__ == "__main__":
    import doctest

    doctest.testmod()
