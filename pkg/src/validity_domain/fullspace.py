"""
Full-space bounding: kernel values, squared distances and network neurons become variables.

Every kernel expansion used as a constraint gets one distance column ``d_i``
and one kernel column ``k_i`` per center; every network output in the
objective gets a column ``z_j``, and each of its hidden neurons a
pre-activation and a post-activation column; a last column ``t`` carries
the objective. Node bounds come from a linear program over these columns
built from tangent and secant cuts, solved with HiGHS. Branching covers the
variables, the distances and the network outputs; all auxiliary bounds are
tightened by interval propagation at every node.
"""

import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .errors import ExpressionError
from .log import debug
from .relax import (
    Box,
    Const,
    Expr,
    KernelExpansion,
    Linear,
    MlpOutput,
    Var,
    affine_overestimators,
    affine_underestimators,
    envelope,
    interval_eval,
    replace,
    walk,
)
from .solver import (
    FS,
    MIN_RELATIVE_WIDTH,
    Bounder,
    Node,
    Problem,
    SolveOptions,
    SolveReport,
    branch_and_bound,
    relative_widths,
)

CUT_SLACK = 1e-9
"""Relative loosening of every cut right-hand side against rounding"""

LP_INFEASIBLE = 2


def _affine_form(expr: Expr, dim: int) -> Optional[Tuple[np.ndarray, float]]:
    """
    ``(a, c)`` with ``expr == a . x + c`` when ``expr`` is affine, else None.

    >>> a, c = _affine_form(Linear([(2.0, Var(1))], 3.0), 2)
    >>> a.tolist(), c
    ([0.0, 2.0], 3.0)
    """
    if isinstance(expr, Var):
        coef = np.zeros(dim)
        coef[expr.index] = 1.0
        return coef, 0.0
    if isinstance(expr, Const):
        return np.zeros(dim), expr.value
    if isinstance(expr, Linear):
        coef, constant = np.zeros(dim), expr.constant
        for c, term in expr.terms:
            form = _affine_form(term, dim)
            if form is None:
                return None
            coef += c * form[0]
            constant += c * form[1]
        return coef, constant
    return None


def _slack(rhs):
    return rhs + CUT_SLACK * (1.0 + np.abs(rhs))


class _Rows:
    """Sparse ``A_ub y <= b_ub`` assembled block by block."""

    def __init__(self):  # noqa: D107
        self.rows: List[np.ndarray] = []
        self.cols: List[np.ndarray] = []
        self.vals: List[np.ndarray] = []
        self.rhs: List[np.ndarray] = []
        self.count = 0

    def add(self, cols, vals, rhs):
        """Add ``len(rhs)`` rows; ``cols`` and ``vals`` are (rows, entries), broadcast as needed."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        n = rhs.shape[0]
        vals = np.atleast_2d(np.asarray(vals, dtype=float))
        shape = (n, max(np.shape(cols)[-1], vals.shape[-1]))
        cols = np.broadcast_to(np.atleast_2d(cols), shape)
        vals = np.broadcast_to(vals, shape)
        self.rows.append(np.repeat(np.arange(self.count, self.count + n), shape[1]))
        self.cols.append(cols.ravel())
        self.vals.append(vals.ravel())
        self.rhs.append(rhs)
        self.count += n

    def matrix(self, n_cols: int):
        """The assembled matrix and right-hand side."""
        if not self.count:
            return None, None
        A = coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.count, n_cols),
        )
        return A.tocsr(), np.concatenate(self.rhs)


class _LiftedKernel:
    """Distance and kernel columns of one kernel expansion constraint ``sum w k + c >= 0``."""

    def __init__(self, node: KernelExpansion, dim: int, first: int):  # noqa: D107
        forms = [_affine_form(u, dim) for u in node.inputs]
        for u, form in zip(node.inputs, forms):
            if form is None:
                raise ExpressionError(
                    f"Full-space lifting needs kernel inputs that are affine in the variables; "
                    f"{type(u).__name__} input {u!r} is not."
                )
        self.node = node
        self.P = np.array([f[0] for f in forms])
        self.q = np.array([f[1] for f in forms])
        self.pinv = np.linalg.pinv(self.P)
        self.m = node.centers.shape[0]
        self.first = first
        """First auxiliary index (distances, then kernels)"""

    @property
    def d_slice(self) -> slice:
        return slice(self.first, self.first + self.m)

    @property
    def k_slice(self) -> slice:
        return slice(self.first + self.m, self.first + 2 * self.m)

    def _g(self, d):
        return np.exp(-self.node.gamma * d)

    def tighten(self, box: Box, lo: np.ndarray, hi: np.ndarray, tol: float) -> bool:
        """Propagate bounds forward from the box and backward from the constraint; False if empty."""
        gamma, w, c = self.node.gamma, self.node.weights, self.node.constant
        ds, ks = self.d_slice, self.k_slice
        d_lo, d_hi = self.node.sqdist_interval(box)
        lo[ds] = np.maximum(lo[ds], d_lo)
        hi[ds] = np.minimum(hi[ds], d_hi)
        lo[ks] = np.maximum(lo[ks], self._g(hi[ds]) * (1.0 - 1e-12))
        hi[ks] = np.minimum(hi[ks], self._g(lo[ds]) * (1.0 + 1e-12))

        top = np.where(w >= 0, w * hi[ks], w * lo[ks])
        total = float(top.sum())
        if total + c < -tol:
            return False
        need = -c - tol - total + top
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = need / w
        pos, neg = w > 0, w < 0
        lo[ks] = np.where(pos, np.maximum(lo[ks], bound - 1e-12 * (1.0 + np.abs(bound))), lo[ks])
        hi[ks] = np.where(neg, np.minimum(hi[ks], bound + 1e-12 * (1.0 + np.abs(bound))), hi[ks])

        with np.errstate(divide="ignore"):
            from_k_hi = np.where(hi[ks] > 0.0, -np.log(np.maximum(hi[ks], 1e-300)) / gamma, -math.inf)
            from_k_lo = -np.log(np.maximum(lo[ks], 0.0)) / gamma
        lo[ds] = np.maximum(lo[ds], from_k_hi - 1e-12 * (1.0 + np.abs(from_k_hi)))
        hi[ds] = np.minimum(hi[ds], from_k_lo + 1e-12 * (1.0 + np.abs(from_k_lo)))
        return True

    def cuts(self, box: Box, lo: np.ndarray, hi: np.ndarray, columns: np.ndarray, rows: _Rows, tol: float):
        """Add the distance, kernel and constraint rows."""
        node, dim = self.node, box.dim
        C = node.centers
        x_cols = np.arange(dim)
        d_cols = columns[self.d_slice]
        k_cols = columns[self.k_slice]
        entries = np.column_stack([np.broadcast_to(x_cols, (self.m, dim)), d_cols])

        # tangent planes of each convex distance at shared points and at the center's projection
        projections = np.array([box.clip(p) for p in ((C - self.q) @ self.pinv.T)])
        points = [np.broadcast_to(p, (self.m, dim)) for p in (box.midpoint, box.lo, box.hi)] + [projections]
        for X in points:
            r = X @ self.P.T + self.q - C
            value = np.sum(r**2, axis=1)
            grad = 2.0 * r @ self.P
            rows.add(entries, np.column_stack([grad, -np.ones(self.m)]), _slack(np.sum(grad * X, axis=1) - value))

        # secant overestimator of each squared coordinate difference
        Pp, Pn = np.maximum(self.P, 0.0), np.minimum(self.P, 0.0)
        u_lo = Pp @ box.lo + Pn @ box.hi + self.q
        u_hi = Pp @ box.hi + Pn @ box.lo + self.q
        S = u_lo + u_hi - 2.0 * C
        rhs = np.sum((u_lo - C) ** 2, axis=1) + S @ (self.q - u_lo)
        rows.add(entries, np.column_stack([-(S @ self.P), np.ones(self.m)]), _slack(rhs))

        # kernel tangents at the ends and middle of the distance range, secant above
        gamma = node.gamma
        d_lo, d_hi = lo[self.d_slice], hi[self.d_slice]
        pairs = np.column_stack([d_cols, k_cols])
        for t in (d_lo, 0.5 * (d_lo + d_hi), d_hi):
            g = self._g(t)
            slope = -gamma * g
            rows.add(pairs, np.column_stack([slope, -np.ones(self.m)]), _slack(slope * t - g))
        g_lo, g_hi = self._g(d_lo), self._g(d_hi)
        width = d_hi - d_lo
        narrow = width <= 1e-12
        secant = np.where(narrow, -gamma * self._g(0.5 * (d_lo + d_hi)), (g_hi - g_lo) / np.where(narrow, 1.0, width))
        rows.add(pairs, np.column_stack([-secant, np.ones(self.m)]), _slack(g_lo - secant * d_lo))

        rows.add(k_cols[None, :], -node.weights[None, :], [node.constant + tol])


class _LiftedNetwork:
    """
    Columns of one network appearing in the objective.

    The output always gets a column ``z``, related to the variables by cuts
    of the whole network. When the network inputs are affine in the
    variables, every hidden neuron also gets a pre-activation column ``s``
    and a post-activation column ``a``: equality rows tie ``s`` to the
    previous layer (and ``z`` to the last hidden layer), and tangent cuts of
    the tanh envelopes on the bounds of ``s`` enclose ``a``.
    """

    def __init__(self, node: MlpOutput, dim: int, index: int):  # noqa: D107
        self.node = node
        self.index = index
        """Auxiliary index of the output column"""
        forms = [_affine_form(u, dim) for u in node.inputs]
        self.lifted = all(form is not None for form in forms)
        self.layers: List[Tuple[Optional[slice], np.ndarray, np.ndarray, slice, Optional[slice]]] = []
        """Per layer: previous columns (None for the variables), matrix, offset, target, activations"""
        self.neurons = 0
        if not self.lifted:
            return
        G = node.in_gain[:, None] * np.array([form[0] for form in forms])
        g = node.in_gain * (np.array([form[1] for form in forms]) - node.in_offset)
        previous: Optional[slice] = None
        start = index + 1
        for last, W, b in node.layers():
            if previous is None:
                W, b = W @ G, W @ g + b
            if last:
                self.layers.append((previous, W / node.out_gain, b / node.out_gain + node.out_offset,
                                    slice(index, index + 1), None))
                break
            n = W.shape[0]
            pre, post = slice(start, start + n), slice(start + n, start + 2 * n)
            self.layers.append((previous, W, b, pre, post))
            previous = post
            start += 2 * n
            self.neurons += n

    @property
    def size(self) -> int:
        """Number of auxiliary columns."""
        return 1 + 2 * self.neurons

    def tighten(self, box: Box, lo: np.ndarray, hi: np.ndarray):
        bounds = interval_eval(self.node, box)
        lo[self.index] = max(lo[self.index], bounds.lo)
        hi[self.index] = min(hi[self.index], bounds.hi)
        for previous, M, c, target, post in self.layers:
            p_lo, p_hi = (box.lo, box.hi) if previous is None else (lo[previous], hi[previous])
            Mp, Mn = np.maximum(M, 0.0), np.minimum(M, 0.0)
            t_lo, t_hi = Mp @ p_lo + Mn @ p_hi + c, Mp @ p_hi + Mn @ p_lo + c
            lo[target] = np.maximum(lo[target], t_lo - 1e-12 * (1.0 + np.abs(t_lo)))
            hi[target] = np.minimum(hi[target], t_hi + 1e-12 * (1.0 + np.abs(t_hi)))
            if post is not None:
                lo[post] = np.maximum(lo[post], np.tanh(lo[target]))
                hi[post] = np.minimum(hi[post], np.tanh(hi[target]))

    def cuts(self, box: Box, lo: np.ndarray, hi: np.ndarray, columns: np.ndarray, steps: int, rows: _Rows):
        column = int(columns[self.index])
        entries = np.append(np.arange(box.dim), column)
        for cut in affine_underestimators(self.node, box, steps):
            rows.add(entries, np.append(cut.slope, -1.0), _slack(cut.slope @ cut.point - cut.value))
        for cut in affine_overestimators(self.node, box, steps):
            rows.add(entries, np.append(-cut.slope, 1.0), _slack(cut.value - cut.slope @ cut.point))

        for previous, M, c, target, post in self.layers:
            own = columns[target]
            source = np.arange(box.dim) if previous is None else columns[previous]
            n = own.shape[0]
            layer = np.column_stack([np.broadcast_to(source, (n, source.shape[0])), own])
            vals = np.column_stack([-M, np.ones(n)])
            rows.add(layer, vals, _slack(c))
            rows.add(layer, -vals, _slack(-c))
            if post is None:
                continue
            s_lo, s_hi = lo[target], hi[target]
            env = envelope("tanh", s_lo, s_hi)
            pairs = np.column_stack([own, columns[post]])
            for t in (s_lo, 0.5 * (s_lo + s_hi), s_hi):
                value, slope = env.cv(t)
                rows.add(pairs, np.column_stack([slope, -np.ones(n)]), _slack(slope * t - value))
                value, slope = env.cc(t)
                rows.add(pairs, np.column_stack([-slope, np.ones(n)]), _slack(value - slope * t))


def _lifting_kind(networks: List[_LiftedNetwork]) -> str:
    """``neurons`` when every network is lifted neuron by neuron, ``outputs`` when none is."""
    if not networks:
        return "none"
    lifted = [network.lifted for network in networks]
    if all(lifted):
        return "neurons"
    return "outputs" if not any(lifted) else "mixed"


class FullSpaceBounder(Bounder):
    """
    Linear-programming bounds over the variables and the lifted auxiliary columns.

    Parameters
    ----------
    problem : Problem
        The problem; kernel expansion constraints need affine inputs.
    options : SolveOptions
        Search settings (``relax_steps`` sets the number of relaxation cuts).
    feas_tol : float
        Constraint tolerance.
    """

    mode = FS

    def __init__(self, problem: Problem, options: SolveOptions, feas_tol: float):  # noqa: D107
        self.problem = problem
        self.options = options
        self.feas_tol = feas_tol
        dim = problem.dim

        self.kernels: List[_LiftedKernel] = []
        self.linear: List[Tuple[np.ndarray, float]] = []
        self.generic: List[Expr] = []
        n_aux = 0
        for g in problem.constraints:
            if isinstance(g, KernelExpansion):
                lifted = _LiftedKernel(g, dim, n_aux)
                self.kernels.append(lifted)
                n_aux += 2 * lifted.m
                continue
            form = _affine_form(g, dim)
            if form is not None:
                self.linear.append(form)
            else:
                self.generic.append(g)

        self.networks: List[_LiftedNetwork] = []
        substitutes: Dict[int, Expr] = {}
        for node in walk(problem.objective):
            if isinstance(node, MlpOutput):
                substitutes[id(node)] = Var(dim + len(self.networks))
                network = _LiftedNetwork(node, dim, n_aux)
                self.networks.append(network)
                n_aux += network.size
        self.objective = replace(problem.objective, lambda node: substitutes.get(id(node)))
        self.n_aux = n_aux
        self.n_cols = dim + n_aux + 1
        self.columns = np.arange(dim, dim + n_aux)
        """LP column of each auxiliary index"""
        self.branchable = np.ones(dim + n_aux, dtype=bool)
        for lifted in self.kernels:
            self.branchable[dim + lifted.k_slice.start:dim + lifted.k_slice.stop] = False
        for network in self.networks:
            self.branchable[dim + network.index + 1:dim + network.index + network.size] = False
        self.root_widths = np.zeros(dim + n_aux)
        self.lp_failures = 0
        self.lp_rows = 0

    def _initial_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = np.full(self.n_aux, -math.inf), np.full(self.n_aux, math.inf)
        for lifted in self.kernels:
            lo[lifted.d_slice], lo[lifted.k_slice], hi[lifted.k_slice] = 0.0, 0.0, 1.0
        return lo, hi

    def _tighten(self, box: Box, lo: np.ndarray, hi: np.ndarray) -> bool:
        for lifted in self.kernels:
            if not lifted.tighten(box, lo, hi, self.feas_tol):
                return False
        for network in self.networks:
            network.tighten(box, lo, hi)
        if np.any(lo > hi + 1e-12 * (1.0 + np.abs(hi))):
            return False
        np.maximum(hi, lo, out=hi)
        return True

    def root(self) -> Node:  # noqa: D102
        box = self.problem.box
        lo, hi = self._initial_bounds()
        if self._tighten(box, lo, hi):
            self.root_widths = np.concatenate([box.widths, hi - lo])
        return Node(box, aux_lo=lo, aux_hi=hi)

    def _extended_box(self, box: Box, lo: np.ndarray, hi: np.ndarray) -> Box:
        index = [n.index for n in self.networks]
        return Box(np.concatenate([box.lo, lo[index]]), np.concatenate([box.hi, hi[index]]))

    def bound(self, node: Node) -> bool:  # noqa: D102
        box = node.box
        lo, hi = node.aux_lo.copy(), node.aux_hi.copy()
        if not self._tighten(box, lo, hi):
            return False
        node.aux_lo, node.aux_hi = lo, hi
        dim, steps, tol = box.dim, self.options.relax_steps, self.feas_tol

        rows = _Rows()
        for lifted in self.kernels:
            lifted.cuts(box, lo, hi, self.columns, rows, tol)
        for a, c in self.linear:
            rows.add(np.arange(dim), -a, [c + tol])
        for g in self.generic:
            for cut in affine_overestimators(g, box, steps):
                rows.add(np.arange(dim), -cut.slope, [_slack(cut.value - cut.slope @ cut.point) + tol])
        for network in self.networks:
            network.cuts(box, lo, hi, self.columns, steps, rows)

        extended = self._extended_box(box, lo, hi)
        y_cols = np.concatenate([np.arange(dim), self.columns[[n.index for n in self.networks]]]).astype(int)
        entries = np.append(y_cols, self.n_cols - 1)
        for cut in affine_underestimators(self.objective, extended, steps):
            rows.add(entries, np.append(cut.slope, -1.0), _slack(cut.slope @ cut.point - cut.value))
        t_lo = max(interval_eval(self.objective, extended).lo, interval_eval(self.problem.objective, box).lo)

        A, b = rows.matrix(self.n_cols)
        self.lp_rows = max(self.lp_rows, rows.count)
        bounds = list(zip(box.lo, box.hi)) + list(zip(lo, hi)) + [(t_lo, None)]
        cost = np.zeros(self.n_cols)
        cost[-1] = 1.0
        result = linprog(cost, A_ub=A, b_ub=b, bounds=bounds, method="highs")
        if result.status == LP_INFEASIBLE:
            return False
        if result.status == 0:
            node.lower_bound = max(float(result.fun), t_lo)
            node.candidate = box.clip(result.x[:dim])
        else:
            self.lp_failures += 1
            debug(f"Node LP ended with status {result.status} ({result.message}); using the interval bound.")
            node.lower_bound = t_lo
        node.feasible = all(interval_eval(g, box).lo >= 0.0 for g in self.problem.constraints)
        return True

    def _widths(self, node: Node) -> np.ndarray:
        widths = np.concatenate([node.box.widths, node.aux_hi - node.aux_lo])
        return np.where(self.branchable, relative_widths(widths, self.root_widths), 0.0)

    def can_branch(self, node: Node) -> bool:  # noqa: D102
        return float(self._widths(node).max()) > MIN_RELATIVE_WIDTH

    def branch(self, node: Node) -> Tuple[Node, Node]:  # noqa: D102
        j = int(np.argmax(self._widths(node)))
        dim = node.box.dim
        if j < dim:
            left, right = node.box.split(j)
            return (
                Node(left, node.depth + 1, aux_lo=node.aux_lo.copy(), aux_hi=node.aux_hi.copy()),
                Node(right, node.depth + 1, aux_lo=node.aux_lo.copy(), aux_hi=node.aux_hi.copy()),
            )
        a = j - dim
        middle = 0.5 * (node.aux_lo[a] + node.aux_hi[a])
        left_hi, right_lo = node.aux_hi.copy(), node.aux_lo.copy()
        left_hi[a], right_lo[a] = middle, middle
        return (
            Node(node.box, node.depth + 1, aux_lo=node.aux_lo.copy(), aux_hi=left_hi),
            Node(node.box, node.depth + 1, aux_lo=right_lo, aux_hi=node.aux_hi.copy()),
        )

    def diagnostics(self) -> dict:  # noqa: D102
        n_kernel = sum(lifted.m for lifted in self.kernels)
        return {
            "variables": self.problem.dim,
            "constraints": len(self.problem.constraints),
            "lifted_distances": n_kernel,
            "lifted_kernels": n_kernel,
            "lifted_networks": len(self.networks),
            "lifted_neurons": sum(network.neurons for network in self.networks),
            "network_lifting": _lifting_kind(self.networks),
            "formula_variables": self.n_cols,
            "lp_columns": self.n_cols,
            "lp_rows": self.lp_rows,
            "lp_failures": self.lp_failures,
        }


def solve_full_space(problem: Problem, options: SolveOptions = SolveOptions(mode=FS)) -> SolveReport:
    """
    Solve in the full space: branch and bound over the variables and the lifted columns.

    Raises
    ------
    ExpressionError
        When a kernel expansion constraint reads non-affine inputs.
    """
    feas_tol = problem.feasibility_tolerance if options.feas_tol is None else options.feas_tol
    return branch_and_bound(problem, options, FullSpaceBounder(problem, options, feas_tol))


if __name__ == "__main__":
    import doctest

    doctest.testmod()
