"""
Interval arithmetic and McCormick relaxations over a small expression graph.

Expressions are built from :class:`Var`, :class:`Const` and a fixed set of
primitives (affine combinations, products, squares, ``exp``, ``tanh``,
``abs``, squared distances, RBF kernels, kernel expansions and tanh
networks). Every node can be evaluated at points (with gradients), bounded
over a box, and relaxed over a box: the relaxation gives the value at a
point of a convex underestimator (``cv``) and a concave overestimator
(``cc``) together with subgradients with respect to the original variables.

All relaxation rules are vectorized over a leading axis of evaluation
points so that bounding a node costs a handful of numpy calls.
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ExpressionError

EPS_INFLATE = 1e-12
"""Relative outward inflation applied to every nonlinear interval result"""

Number = Union[int, float]


def _inflate(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return (lo - EPS_INFLATE * np.maximum(1.0, np.abs(lo)), hi + EPS_INFLATE * np.maximum(1.0, np.abs(hi)))


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lo, hi]``."""

    lo: float
    hi: float

    def __post_init__(self):  # noqa: D105
        if not self.lo <= self.hi:
            raise ExpressionError(f"Empty or undefined interval [{self.lo}, {self.hi}].")

    @property
    def width(self) -> float:
        """Length of the interval."""
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        """Midpoint."""
        return 0.5 * (self.lo + self.hi)

    def contains(self, value: float, slack: float = 0.0) -> bool:
        """Whether ``value`` lies in the interval enlarged by ``slack``."""
        return self.lo - slack <= value <= self.hi + slack


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box ``[lo, hi]`` in D dimensions."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):  # noqa: D105
        lo = np.array(self.lo, dtype=float).ravel()
        hi = np.array(self.hi, dtype=float).ravel()
        if lo.shape != hi.shape or lo.size == 0:
            raise ExpressionError(f"Box bounds of shapes {lo.shape} and {hi.shape} do not match.")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo <= hi)):
            raise ExpressionError("A box needs finite bounds with lo <= hi.")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __repr__(self) -> str:  # noqa: D105
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"

    @classmethod
    def from_intervals(cls, intervals: Sequence[Interval]) -> "Box":
        """Box with one interval per dimension."""
        return cls([i.lo for i in intervals], [i.hi for i in intervals])

    @property
    def dim(self) -> int:
        """Number of dimensions."""
        return self.lo.shape[0]

    @property
    def widths(self) -> np.ndarray:
        """Edge lengths."""
        return self.hi - self.lo

    @property
    def midpoint(self) -> np.ndarray:
        """Center of the box."""
        return 0.5 * (self.lo + self.hi)

    @property
    def volume(self) -> float:
        """Product of the edge lengths."""
        return float(np.prod(self.widths))

    def intervals(self) -> List[Interval]:
        """One interval per dimension."""
        return [Interval(float(a), float(b)) for a, b in zip(self.lo, self.hi)]

    def contains(self, x, tol: float = 0.0) -> bool:
        """Whether ``x`` lies in the box enlarged by ``tol``."""
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def clip(self, x) -> np.ndarray:
        """Closest point of the box."""
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def split(self, dim: int, at: Optional[float] = None) -> Tuple["Box", "Box"]:
        """
        Bisect along ``dim`` (at the midpoint unless ``at`` is given).

        >>> left, right = Box([0.0, 0.0], [2.0, 1.0]).split(0)
        >>> left, right
        (Box(lo=[0.0, 0.0], hi=[1.0, 1.0]), Box(lo=[1.0, 0.0], hi=[2.0, 1.0]))
        """
        at = 0.5 * (self.lo[dim] + self.hi[dim]) if at is None else float(at)
        left_hi = self.hi.copy()
        left_hi[dim] = at
        right_lo = self.lo.copy()
        right_lo[dim] = at
        return Box(self.lo, left_hi), Box(right_lo, self.hi)


@dataclass(eq=False)
class RelaxValue:
    """
    Bounds and McCormick relaxation values of an expression at a point.

    ``lo <= cv <= f(x) <= cc <= hi`` where ``cv`` (``cc``) is the value of a
    convex underestimator (concave overestimator) of ``f`` over the box.
    Internally the fields carry a leading axis of evaluation points.
    """

    lo: np.ndarray
    hi: np.ndarray
    cv: np.ndarray
    cc: np.ndarray
    cv_sub: np.ndarray
    """Subgradient of the convex underestimator"""
    cc_sub: np.ndarray
    """Supergradient of the concave overestimator"""

    @property
    def interval(self) -> Interval:
        """Bounds of the expression over the box."""
        return Interval(float(self.lo), float(self.hi))


def _clamp(r: RelaxValue) -> RelaxValue:
    low = r.cv < r.lo
    high = r.cc > r.hi
    if np.any(low):
        r.cv = np.where(low, r.lo, r.cv)
        r.cv_sub = np.where(low[..., None], 0.0, r.cv_sub)
    if np.any(high):
        r.cc = np.where(high, r.hi, r.cc)
        r.cc_sub = np.where(high[..., None], 0.0, r.cc_sub)
    return r


def _mid(a, b, c):
    return np.minimum(np.maximum(a, c), b)


# ---------------------------------------------------------------------------
# Univariate envelopes
# ---------------------------------------------------------------------------


def _exp(z):
    return np.exp(np.minimum(z, 700.0))


def _sech2(z):
    return 1.0 - np.tanh(z) ** 2


_FUNCTIONS: Dict[str, Tuple[Callable, Callable]] = {
    "exp": (_exp, _exp),
    "tanh": (np.tanh, _sech2),
    "square": (np.square, lambda z: 2.0 * z),
    "abs": (np.abs, np.sign),
}


def _chord(f, df, a, b, z):
    width = b - a
    narrow = width <= 1e-14 * np.maximum(1.0, np.abs(a) + np.abs(b))
    slope = np.where(narrow, df(0.5 * (a + b)), (f(b) - f(a)) / np.where(narrow, 1.0, width))
    return f(a) + slope * (z - a), slope


def _bisect(fun, a, b, iterations: int = 64):
    """Shrink brackets with ``fun(a) < 0 <= fun(b)`` elementwise."""
    for _ in range(iterations):
        m = 0.5 * (a + b)
        negative = fun(m) < 0
        a = np.where(negative, m, a)
        b = np.where(negative, b, m)
    return a, b


class Envelope:
    """
    Convex and concave envelopes of ``exp``, ``tanh``, ``square`` or ``abs`` on ``[lo, hi]``.

    Vectorized over arrays of intervals. ``cv(z)`` and ``cc(z)`` return the
    envelope value and slope at ``z``; ``zmin`` minimizes the convex envelope
    and ``zmax`` maximizes the concave one.

    >>> env = Envelope("exp", 0.0, 1.0)
    >>> [round(float(v), 4) for v in (env.cv(0.5)[0], env.cc(0.5)[0])]
    [1.6487, 1.8591]
    """

    def __init__(self, kind: str, lo, hi):  # noqa: D107
        if kind not in _FUNCTIONS:
            raise ExpressionError(f'No envelope for primitive "{kind}".')
        self.kind = kind
        self.f, self.df = _FUNCTIONS[kind]
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        l, u = self.lo, self.hi
        if kind in ("exp", "tanh"):
            self.zmin, self.zmax = l, u
            range_lo, range_hi = self.f(l), self.f(u)
        else:
            self.zmin = np.clip(0.0, l, u)
            self.zmax = np.where(np.abs(u) >= np.abs(l), u, l)
            range_lo = np.where(l > 0, self.f(l), np.where(u < 0, self.f(u), 0.0))
            range_hi = np.maximum(self.f(l), self.f(u))
        self.range_lo, self.range_hi = _inflate(range_lo, range_hi)
        if kind == "tanh":
            self._tanh_touch_points()

    def _tanh_touch_points(self):
        l, u = self.lo, self.hi
        mixed = (l < 0) & (u > 0)
        # tangent at p (convex part) through (u, tanh u)
        h = lambda p: np.tanh(p) + _sech2(p) * (u - p) - np.tanh(u)  # noqa: E731
        tangent_cv = mixed & (h(l) < 0)
        p = np.where(u <= 0, u, l)
        if np.any(tangent_cv):
            _, right = _bisect(h, np.where(tangent_cv, l, -1.0), np.where(tangent_cv, 0.0, 0.0))
            p = np.where(tangent_cv, right, p)
        # tangent at q (concave part) through (l, tanh l)
        k = lambda q: np.tanh(q) + _sech2(q) * (l - q) - np.tanh(l)  # noqa: E731
        tangent_cc = mixed & (k(u) > 0)
        q = np.where(l >= 0, l, u)
        if np.any(tangent_cc):
            left, _ = _bisect(k, np.where(tangent_cc, 0.0, 0.0), np.where(tangent_cc, u, 1.0))
            q = np.where(tangent_cc, left, q)
        self.p, self.q = p, q

    def cv(self, z):
        """Convex envelope value and slope at ``z``."""
        z = np.asarray(z, dtype=float)
        if self.kind != "tanh":
            return self.f(z), self.df(z)
        p = self.p
        line, slope = _chord(np.tanh, _sech2, p, self.hi, z)
        curve = z <= p
        return np.where(curve, np.tanh(z), line), np.where(curve, _sech2(z), slope)

    def cc(self, z):
        """Concave envelope value and slope at ``z``."""
        z = np.asarray(z, dtype=float)
        l, u = self.lo, self.hi
        if self.kind != "tanh":
            return _chord(self.f, self.df, l, u, z)
        q = self.q
        line, slope = _chord(np.tanh, _sech2, l, q, z)
        curve = z >= q
        return np.where(curve, np.tanh(z), line), np.where(curve, _sech2(z), slope)


def envelope(kind: str, lo, hi) -> Envelope:
    """Envelopes of a univariate primitive on ``[lo, hi]``."""
    return Envelope(kind, lo, hi)


def _compose(kind: str, arg: RelaxValue) -> RelaxValue:
    """McCormick composition ``phi(arg)`` for a univariate primitive ``phi``."""
    env = Envelope(kind, arg.lo, arg.hi)
    zero = np.zeros_like(arg.cv_sub)

    z_cv = _mid(arg.cv, arg.cc, env.zmin)
    value_cv, slope_cv = env.cv(z_cv)
    inner_cv = np.where((env.zmin <= arg.cv)[..., None], arg.cv_sub,
                        np.where((env.zmin >= arg.cc)[..., None], arg.cc_sub, zero))

    z_cc = _mid(arg.cv, arg.cc, env.zmax)
    value_cc, slope_cc = env.cc(z_cc)
    inner_cc = np.where((env.zmax <= arg.cv)[..., None], arg.cv_sub,
                        np.where((env.zmax >= arg.cc)[..., None], arg.cc_sub, zero))

    return _clamp(RelaxValue(env.range_lo, env.range_hi, value_cv, value_cc,
                             slope_cv[..., None] * inner_cv, slope_cc[..., None] * inner_cc))


def _scale(r: RelaxValue, coef, shift=0.0) -> RelaxValue:
    """Relaxation of ``coef * r + shift`` (``coef`` elementwise, any sign)."""
    coef = np.asarray(coef, dtype=float)
    pos = np.asarray(coef >= 0)
    lo = np.where(pos, coef * r.lo, coef * r.hi) + shift
    hi = np.where(pos, coef * r.hi, coef * r.lo) + shift
    cv = np.where(pos, coef * r.cv, coef * r.cc) + shift
    cc = np.where(pos, coef * r.cc, coef * r.cv) + shift
    cv_sub = np.where(pos[..., None], coef[..., None] * r.cv_sub, coef[..., None] * r.cc_sub)
    cc_sub = np.where(pos[..., None], coef[..., None] * r.cc_sub, coef[..., None] * r.cv_sub)
    return RelaxValue(lo, hi, cv, cc, cv_sub, cc_sub)


def _sum_last(r: RelaxValue) -> RelaxValue:
    """Relaxation of the sum over the last value axis."""
    lo, hi = _inflate(r.lo.sum(axis=-1), r.hi.sum(axis=-1))
    return RelaxValue(lo, hi, r.cv.sum(axis=-1), r.cc.sum(axis=-1), r.cv_sub.sum(axis=-2), r.cc_sub.sum(axis=-2))


def _product(a: RelaxValue, b: RelaxValue) -> RelaxValue:
    """McCormick relaxation of the bilinear product ``a * b``."""
    xl, xu, yl, yu = a.lo, a.hi, b.lo, b.hi

    def term(coef, r, convex):
        pos = np.asarray(np.asarray(coef) >= 0)
        low_side = pos if convex else np.logical_not(pos)
        value = coef * np.where(low_side, r.cv, r.cc)
        sub = np.asarray(coef)[..., None] * np.where(low_side[..., None], r.cv_sub, r.cc_sub)
        return value, sub

    def combine(t1, t2, constant):
        return t1[0] + t2[0] - constant, t1[1] + t2[1]

    v1, s1 = combine(term(yl, a, True), term(xl, b, True), xl * yl)
    v2, s2 = combine(term(yu, a, True), term(xu, b, True), xu * yu)
    first = v1 >= v2
    cv, cv_sub = np.where(first, v1, v2), np.where(first[..., None], s1, s2)

    v3, s3 = combine(term(yl, a, False), term(xu, b, False), xu * yl)
    v4, s4 = combine(term(yu, a, False), term(xl, b, False), xl * yu)
    first = v3 <= v4
    cc, cc_sub = np.where(first, v3, v4), np.where(first[..., None], s3, s4)

    corners = np.stack([xl * yl, xl * yu, xu * yl, xu * yu])
    lo, hi = _inflate(corners.min(axis=0), corners.max(axis=0))
    return _clamp(RelaxValue(lo, hi, cv, cc, cv_sub, cc_sub))


def _rbf_from_sqdist(d: RelaxValue, gamma: float) -> RelaxValue:
    """
    Relaxation of ``exp(-gamma * d)`` from a relaxation of ``d >= 0``.

    ``g(d) = exp(-gamma d)`` is convex and decreasing, so ``g(d_cc)`` is a
    convex underestimator and the chord of ``g`` over ``[d_lo, d_hi]`` at
    ``d_cv`` is a concave overestimator.
    """
    d_lo = np.maximum(d.lo, 0.0)
    d_hi = np.maximum(d.hi, d_lo)
    d_cc = np.minimum(np.maximum(d.cc, d_lo), d_hi)
    d_cv = np.minimum(np.maximum(d.cv, d_lo), d_hi)
    g = lambda t: np.exp(-gamma * t)  # noqa: E731
    dg = lambda t: -gamma * np.exp(-gamma * t)  # noqa: E731
    cv = g(d_cc)
    cv_sub = (dg(d_cc) * ((d.cc <= d_hi) & (d.cc >= d_lo)))[..., None] * d.cc_sub
    cc, slope = _chord(g, dg, d_lo, d_hi, d_cv)
    cc_sub = (slope * ((d.cv <= d_hi) & (d.cv >= d_lo)))[..., None] * d.cv_sub
    lo, hi = _inflate(g(d_hi), g(d_lo))
    return _clamp(RelaxValue(lo, hi, cv, cc, cv_sub, cc_sub))


def _stack(relaxes: Sequence[RelaxValue]) -> RelaxValue:
    """Stack scalar relaxations into a vector relaxation (last value axis)."""
    return RelaxValue(
        np.array([r.lo for r in relaxes], dtype=float),
        np.array([r.hi for r in relaxes], dtype=float),
        np.stack([r.cv for r in relaxes], axis=-1),
        np.stack([r.cc for r in relaxes], axis=-1),
        np.stack([r.cv_sub for r in relaxes], axis=-2),
        np.stack([r.cc_sub for r in relaxes], axis=-2),
    )


def _matvec(W: np.ndarray, r: RelaxValue, bias: np.ndarray) -> RelaxValue:
    """Relaxation of ``W u + bias`` for a vector relaxation ``u``."""
    Wp, Wn = np.maximum(W, 0.0), np.minimum(W, 0.0)
    lo, hi = _inflate(Wp @ r.lo + Wn @ r.hi + bias, Wp @ r.hi + Wn @ r.lo + bias)
    cv = r.cv @ Wp.T + r.cc @ Wn.T + bias
    cc = r.cc @ Wp.T + r.cv @ Wn.T + bias
    cv_sub = np.einsum("hk,pkd->phd", Wp, r.cv_sub) + np.einsum("hk,pkd->phd", Wn, r.cc_sub)
    cc_sub = np.einsum("hk,pkd->phd", Wp, r.cc_sub) + np.einsum("hk,pkd->phd", Wn, r.cv_sub)
    return RelaxValue(lo, hi, cv, cc, cv_sub, cc_sub)


# ---------------------------------------------------------------------------
# Expression graph
# ---------------------------------------------------------------------------


def _memo(method: str):
    def call(expr: "Expr", *args):
        memo = args[-1]
        key = id(expr)
        if key not in memo:
            memo[key] = getattr(expr, method)(*args)
        return memo[key]

    return call


_interval = _memo("_interval")
_relax = _memo("_relax")
_eval = _memo("_eval")


class Expr:
    """
    Node of an expression over variables ``x[0..D-1]``.

    Subclasses implement ``_interval(box, memo)``, ``_relax(box, X, memo)``
    and ``_eval(X, memo)`` (values and gradients at a batch of points).
    """

    def children(self) -> Tuple["Expr", ...]:
        """Direct subexpressions."""
        return ()

    def rebuild(self, children: Sequence["Expr"]) -> "Expr":
        """Copy of this node over new children."""
        return self

    def _unsupported(self, what: str):
        raise ExpressionError(f"Node {type(self).__name__} does not support {what}.")

    def _interval(self, box: Box, memo: dict):
        self._unsupported("interval bounds")

    def _relax(self, box: Box, X: np.ndarray, memo: dict) -> RelaxValue:
        self._unsupported("McCormick relaxation")

    def _eval(self, X: np.ndarray, memo: dict):
        self._unsupported("evaluation")

    def __add__(self, other):  # noqa: D105
        return Linear.combine([(1.0, self), (1.0, as_expr(other))])

    def __radd__(self, other):  # noqa: D105
        return Linear.combine([(1.0, as_expr(other)), (1.0, self)])

    def __sub__(self, other):  # noqa: D105
        return Linear.combine([(1.0, self), (-1.0, as_expr(other))])

    def __rsub__(self, other):  # noqa: D105
        return Linear.combine([(1.0, as_expr(other)), (-1.0, self)])

    def __neg__(self):  # noqa: D105
        return Linear.combine([(-1.0, self)])

    def __mul__(self, other):  # noqa: D105
        if isinstance(other, (int, float)):
            return Linear.combine([(float(other), self)])
        other = as_expr(other)
        if isinstance(other, Const):
            return Linear.combine([(other.value, self)])
        if isinstance(self, Const):
            return Linear.combine([(self.value, other)])
        return Product(self, other)

    def __rmul__(self, other):  # noqa: D105
        return self.__mul__(other)

    def __truediv__(self, other):  # noqa: D105
        if not isinstance(other, (int, float)) or other == 0:
            raise ExpressionError("Expressions can only be divided by nonzero numbers.")
        return Linear.combine([(1.0 / other, self)])

    def __pow__(self, exponent):  # noqa: D105
        if exponent == 2:
            return Square(self)
        if exponent == 1:
            return self
        raise ExpressionError(f"Only squares are supported as powers, got exponent {exponent}.")


def as_expr(value: Union[Expr, Number]) -> Expr:
    """Wrap numbers as :class:`Const`."""
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Const(float(value))
    raise ExpressionError(f"Cannot use {type(value).__name__} in an expression.")


class Var(Expr):
    """The variable ``x[index]``."""

    def __init__(self, index: int):  # noqa: D107
        self.index = int(index)

    def __repr__(self) -> str:  # noqa: D105
        return f"x{self.index}"

    def _check(self, dim: int):
        if not 0 <= self.index < dim:
            raise ExpressionError(f"Node Var(x{self.index}) is out of range for {dim} variable(s).")

    def _interval(self, box, memo):
        self._check(box.dim)
        return box.lo[self.index], box.hi[self.index]

    def _relax(self, box, X, memo):
        self._check(box.dim)
        sub = np.zeros((X.shape[0], box.dim))
        sub[:, self.index] = 1.0
        values = X[:, self.index]
        return RelaxValue(box.lo[self.index], box.hi[self.index], values, values.copy(), sub, sub.copy())

    def _eval(self, X, memo):
        self._check(X.shape[1])
        grad = np.zeros_like(X)
        grad[:, self.index] = 1.0
        return X[:, self.index], grad


class Const(Expr):
    """A constant."""

    def __init__(self, value: float):  # noqa: D107
        self.value = float(value)

    def __repr__(self) -> str:  # noqa: D105
        return repr(self.value)

    def _interval(self, box, memo):
        return self.value, self.value

    def _relax(self, box, X, memo):
        values = np.full(X.shape[0], self.value)
        zero = np.zeros((X.shape[0], box.dim))
        return RelaxValue(np.float64(self.value), np.float64(self.value), values, values.copy(), zero, zero.copy())

    def _eval(self, X, memo):
        return np.full(X.shape[0], self.value), np.zeros_like(X)


class Linear(Expr):
    """Affine combination ``constant + sum(coef * term)``."""

    def __init__(self, terms: Sequence[Tuple[float, Expr]], constant: float = 0.0):  # noqa: D107
        self.terms = tuple((float(c), t) for c, t in terms)
        self.constant = float(constant)

    @classmethod
    def combine(cls, parts: Sequence[Tuple[float, Expr]], constant: float = 0.0) -> Expr:
        """Build a flattened affine combination, folding constants and nested combinations."""
        terms: List[Tuple[float, Expr]] = []
        for coef, expr in parts:
            if isinstance(expr, Const):
                constant += coef * expr.value
            elif isinstance(expr, Linear):
                constant += coef * expr.constant
                terms.extend((coef * c, t) for c, t in expr.terms)
            else:
                terms.append((coef, expr))
        if not terms:
            return Const(constant)
        return cls(terms, constant)

    def __repr__(self) -> str:  # noqa: D105
        body = " + ".join(f"{c:g}*{t!r}" for c, t in self.terms)
        return f"({body} + {self.constant:g})"

    def children(self):  # noqa: D102
        return tuple(t for _, t in self.terms)

    def rebuild(self, children):  # noqa: D102
        return Linear.combine([(c, t) for (c, _), t in zip(self.terms, children)], self.constant)

    def _interval(self, box, memo):
        lo = hi = self.constant
        for coef, term in self.terms:
            a, b = _interval(term, box, memo)
            lo, hi = (lo + coef * a, hi + coef * b) if coef >= 0 else (lo + coef * b, hi + coef * a)
        return lo, hi

    def _relax(self, box, X, memo):
        lo = hi = self.constant
        cv = np.full(X.shape[0], self.constant)
        cc = cv.copy()
        cv_sub = np.zeros((X.shape[0], box.dim))
        cc_sub = cv_sub.copy()
        for coef, term in self.terms:
            r = _relax(term, box, X, memo)
            if coef >= 0:
                lo, hi = lo + coef * r.lo, hi + coef * r.hi
                cv, cc = cv + coef * r.cv, cc + coef * r.cc
                cv_sub, cc_sub = cv_sub + coef * r.cv_sub, cc_sub + coef * r.cc_sub
            else:
                lo, hi = lo + coef * r.hi, hi + coef * r.lo
                cv, cc = cv + coef * r.cc, cc + coef * r.cv
                cv_sub, cc_sub = cv_sub + coef * r.cc_sub, cc_sub + coef * r.cv_sub
        if len(self.terms) > 1 or any(not isinstance(t, Var) for _, t in self.terms):
            lo, hi = _inflate(lo, hi)
        return _clamp(RelaxValue(np.float64(lo), np.float64(hi), cv, cc, cv_sub, cc_sub))

    def _eval(self, X, memo):
        value = np.full(X.shape[0], self.constant)
        grad = np.zeros_like(X)
        for coef, term in self.terms:
            v, g = _eval(term, X, memo)
            value = value + coef * v
            grad = grad + coef * g
        return value, grad


class Product(Expr):
    """Product of two expressions."""

    def __init__(self, left: Expr, right: Expr):  # noqa: D107
        self.left, self.right = left, right

    def __repr__(self) -> str:  # noqa: D105
        return f"({self.left!r} * {self.right!r})"

    def children(self):  # noqa: D102
        return (self.left, self.right)

    def rebuild(self, children):  # noqa: D102
        return Product(*children)

    def _interval(self, box, memo):
        a, b = _interval(self.left, box, memo)
        c, d = _interval(self.right, box, memo)
        corners = (a * c, a * d, b * c, b * d)
        return tuple(float(v) for v in _inflate(min(corners), max(corners)))

    def _relax(self, box, X, memo):
        return _product(_relax(self.left, box, X, memo), _relax(self.right, box, X, memo))

    def _eval(self, X, memo):
        u, du = _eval(self.left, X, memo)
        v, dv = _eval(self.right, X, memo)
        return u * v, du * v[:, None] + dv * u[:, None]


class _Unary(Expr):
    kind = ""

    def __init__(self, arg: Expr):  # noqa: D107
        self.arg = arg

    def __repr__(self) -> str:  # noqa: D105
        return f"{self.kind}({self.arg!r})"

    def children(self):  # noqa: D102
        return (self.arg,)

    def rebuild(self, children):  # noqa: D102
        return type(self)(children[0])

    def _interval(self, box, memo):
        lo, hi = _interval(self.arg, box, memo)
        env = Envelope(self.kind, lo, hi)
        return float(env.range_lo), float(env.range_hi)

    def _relax(self, box, X, memo):
        return _compose(self.kind, _relax(self.arg, box, X, memo))

    def _eval(self, X, memo):
        f, df = _FUNCTIONS[self.kind]
        u, du = _eval(self.arg, X, memo)
        return f(u), df(u)[:, None] * du


class Exp(_Unary):
    """``exp(arg)``."""

    kind = "exp"


class Tanh(_Unary):
    """``tanh(arg)``."""

    kind = "tanh"


class Square(_Unary):
    """``arg ** 2``."""

    kind = "square"


class Abs(_Unary):
    """``|arg|``."""

    kind = "abs"


def exp(arg) -> Expr:
    """``exp`` of an expression."""
    return Exp(as_expr(arg))


def tanh(arg) -> Expr:
    """``tanh`` of an expression."""
    return Tanh(as_expr(arg))


def absolute(arg) -> Expr:
    """``|.|`` of an expression."""
    return Abs(as_expr(arg))


class _VectorNode(Expr):
    """Node reading a vector of input expressions."""

    def __init__(self, inputs: Sequence[Expr]):  # noqa: D107
        self.inputs = tuple(as_expr(u) for u in inputs)

    def children(self):  # noqa: D102
        return self.inputs

    def _input_relax(self, box, X, memo) -> RelaxValue:
        return _stack([_relax(u, box, X, memo) for u in self.inputs])

    def _input_interval(self, box, memo):
        bounds = [_interval(u, box, memo) for u in self.inputs]
        return np.array([b[0] for b in bounds], dtype=float), np.array([b[1] for b in bounds], dtype=float)

    def _input_eval(self, X, memo):
        evaluated = [_eval(u, X, memo) for u in self.inputs]
        return np.column_stack([v for v, _ in evaluated]), np.stack([g for _, g in evaluated], axis=1)


def _shifted_squares(centers: np.ndarray, u: RelaxValue) -> RelaxValue:
    """Relaxation of ``(u_k - c_jk)^2`` for every center row ``j`` and input ``k``."""
    shifted = RelaxValue(
        u.lo - centers,
        u.hi - centers,
        u.cv[:, None, :] - centers,
        u.cc[:, None, :] - centers,
        np.broadcast_to(u.cv_sub[:, None, :, :], u.cv_sub.shape[:1] + centers.shape + u.cv_sub.shape[-1:]),
        np.broadcast_to(u.cc_sub[:, None, :, :], u.cc_sub.shape[:1] + centers.shape + u.cc_sub.shape[-1:]),
    )
    return _compose("square", shifted)


def _squared_interval(lo: np.ndarray, hi: np.ndarray):
    low = np.where(lo > 0, lo**2, np.where(hi < 0, hi**2, 0.0))
    return low, np.maximum(lo**2, hi**2)


class SqDist(_VectorNode):
    """Squared Euclidean distance ``sum_k (u_k - c_k)^2`` between inputs and a fixed center."""

    def __init__(self, center: Sequence[float], inputs: Sequence[Expr]):  # noqa: D107
        super().__init__(inputs)
        self.center = np.asarray(center, dtype=float).ravel()
        if self.center.shape[0] != len(self.inputs):
            raise ExpressionError(f"SqDist center of length {self.center.shape[0]} for {len(self.inputs)} input(s).")

    def rebuild(self, children):  # noqa: D102
        return SqDist(self.center, children)

    def _interval(self, box, memo):
        lo, hi = self._input_interval(box, memo)
        low, high = _squared_interval(lo - self.center, hi - self.center)
        return tuple(float(v) for v in _inflate(low.sum(), high.sum()))

    def _relax(self, box, X, memo):
        squares = _shifted_squares(self.center[None, :], self._input_relax(box, X, memo))
        d = _sum_last(squares)
        return _clamp(RelaxValue(d.lo[0], d.hi[0], d.cv[:, 0], d.cc[:, 0], d.cv_sub[:, 0], d.cc_sub[:, 0]))

    def _eval(self, X, memo):
        u, du = self._input_eval(X, memo)
        diff = u - self.center
        return np.sum(diff**2, axis=1), np.einsum("pk,pkd->pd", 2.0 * diff, du)


class Rbf(_VectorNode):
    """Gaussian kernel ``exp(-gamma * ||c - u||^2)`` relaxed as a composite term."""

    def __init__(self, center: Sequence[float], gamma: float, inputs: Sequence[Expr]):  # noqa: D107
        super().__init__(inputs)
        self.center = np.asarray(center, dtype=float).ravel()
        self.gamma = float(gamma)
        if not self.gamma > 0:
            raise ExpressionError(f"RBF gamma must be positive, got {gamma}.")
        if self.center.shape[0] != len(self.inputs):
            raise ExpressionError(f"Rbf center of length {self.center.shape[0]} for {len(self.inputs)} input(s).")

    def rebuild(self, children):  # noqa: D102
        return Rbf(self.center, self.gamma, children)

    def _interval(self, box, memo):
        lo, hi = SqDist(self.center, self.inputs)._interval(box, memo)
        return tuple(float(v) for v in _inflate(math.exp(-self.gamma * hi), math.exp(-self.gamma * lo)))

    def _relax(self, box, X, memo):
        d = SqDist(self.center, self.inputs)._relax(box, X, memo)
        return _rbf_from_sqdist(d, self.gamma)

    def _eval(self, X, memo):
        d, dd = SqDist(self.center, self.inputs)._eval(X, memo)
        k = np.exp(-self.gamma * d)
        return k, (-self.gamma * k)[:, None] * dd


class KernelExpansion(_VectorNode):
    """``constant + sum_j w_j exp(-gamma ||c_j - u||^2)`` over fixed centers ``c_j``."""

    def __init__(self, centers, weights, gamma: float, inputs: Sequence[Expr], constant: float = 0.0):  # noqa: D107
        super().__init__(inputs)
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.weights = np.asarray(weights, dtype=float).ravel()
        self.gamma = float(gamma)
        self.constant = float(constant)
        if self.centers.shape != (self.weights.shape[0], len(self.inputs)):
            raise ExpressionError(
                f"KernelExpansion with centers {self.centers.shape}, {self.weights.shape[0]} weight(s) "
                f"and {len(self.inputs)} input(s)."
            )
        if not self.gamma > 0:
            raise ExpressionError(f"Kernel gamma must be positive, got {gamma}.")

    def rebuild(self, children):  # noqa: D102
        return KernelExpansion(self.centers, self.weights, self.gamma, children, self.constant)

    def sqdist_relax(self, box: Box, X: np.ndarray, memo: Optional[dict] = None) -> RelaxValue:
        """Vector relaxation of the squared distances to every center."""
        memo = {} if memo is None else memo
        return _sum_last(_shifted_squares(self.centers, self._input_relax(box, X, memo)))

    def sqdist_interval(self, box: Box, memo: Optional[dict] = None):
        """Bounds of the squared distances to every center."""
        lo, hi = self._input_interval(box, {} if memo is None else memo)
        low, high = _squared_interval(lo - self.centers, hi - self.centers)
        return _inflate(low.sum(axis=1), high.sum(axis=1))

    def _interval(self, box, memo):
        d_lo, d_hi = self.sqdist_interval(box, memo)
        k_lo, k_hi = np.exp(-self.gamma * d_hi), np.exp(-self.gamma * d_lo)
        pos = self.weights >= 0
        lo = self.constant + np.sum(np.where(pos, self.weights * k_lo, self.weights * k_hi))
        hi = self.constant + np.sum(np.where(pos, self.weights * k_hi, self.weights * k_lo))
        return tuple(float(v) for v in _inflate(lo, hi))

    def _relax(self, box, X, memo):
        kernels = _rbf_from_sqdist(self.sqdist_relax(box, X, memo), self.gamma)
        weighted = _scale(kernels, self.weights)
        total = _sum_last(weighted)
        total.lo, total.hi = total.lo + self.constant, total.hi + self.constant
        total.cv, total.cc = total.cv + self.constant, total.cc + self.constant
        return _clamp(total)

    def _eval(self, X, memo):
        u, du = self._input_eval(X, memo)
        k = np.exp(-self.gamma * cdist(u, self.centers, "sqeuclidean"))
        weighted = k * self.weights
        value = self.constant + weighted.sum(axis=1)
        d_value_du = -2.0 * self.gamma * (weighted.sum(axis=1)[:, None] * u - weighted @ self.centers)
        return value, np.einsum("pk,pkd->pd", d_value_du, du)


class MlpOutput(_VectorNode):
    """
    One output of a tanh network with linear output layer.

    Inputs are scaled with ``(u - in_offset) * in_gain``, the network is
    applied, and the chosen output is unscaled with ``z / out_gain + out_offset``.
    """

    def __init__(self, weights, biases, in_offset, in_gain, out_offset: float, out_gain: float,
                 inputs: Sequence[Expr], output: int = 0):  # noqa: D107
        super().__init__(inputs)
        self.weights = [np.asarray(W, dtype=float) for W in weights]
        self.biases = [np.asarray(b, dtype=float).ravel() for b in biases]
        self.in_offset = np.asarray(in_offset, dtype=float).ravel()
        self.in_gain = np.asarray(in_gain, dtype=float).ravel()
        self.out_offset = float(out_offset)
        self.out_gain = float(out_gain)
        self.output = int(output)
        if self.weights[0].shape[1] != len(self.inputs) or self.in_gain.shape[0] != len(self.inputs):
            raise ExpressionError(f"MlpOutput expects {self.weights[0].shape[1]} input(s), got {len(self.inputs)}.")
        if not self.out_gain > 0 or not np.all(self.in_gain > 0):
            raise ExpressionError("MlpOutput scaling gains must be positive.")

    def rebuild(self, children):  # noqa: D102
        return MlpOutput(self.weights, self.biases, self.in_offset, self.in_gain,
                         self.out_offset, self.out_gain, children, self.output)

    def layers(self):
        """``(is_output, W, b)`` per layer, the output layer cut to the chosen output."""
        last = len(self.weights) - 1
        for index, (W, b) in enumerate(zip(self.weights, self.biases)):
            if index == last:
                W, b = W[self.output:self.output + 1], b[self.output:self.output + 1]
            yield index == last, W, b

    def _interval(self, box, memo):
        lo, hi = self._input_interval(box, memo)
        lo, hi = (lo - self.in_offset) * self.in_gain, (hi - self.in_offset) * self.in_gain
        for last, W, b in self.layers():
            Wp, Wn = np.maximum(W, 0.0), np.minimum(W, 0.0)
            lo, hi = _inflate(Wp @ lo + Wn @ hi + b, Wp @ hi + Wn @ lo + b)
            if not last:
                lo, hi = _inflate(np.tanh(lo), np.tanh(hi))
        return float(lo[0] / self.out_gain + self.out_offset), float(hi[0] / self.out_gain + self.out_offset)

    def _relax(self, box, X, memo):
        r = _scale(self._input_relax(box, X, memo), self.in_gain, -self.in_offset * self.in_gain)
        for last, W, b in self.layers():
            r = _matvec(W, r, b)
            if not last:
                r = _compose("tanh", r)
        out = RelaxValue(r.lo[0], r.hi[0], r.cv[:, 0], r.cc[:, 0], r.cv_sub[:, 0], r.cc_sub[:, 0])
        return _clamp(_scale(out, 1.0 / self.out_gain, self.out_offset))

    def _eval(self, X, memo):
        u, du = self._input_eval(X, memo)
        a = (u - self.in_offset) * self.in_gain
        jac = np.broadcast_to(np.diag(self.in_gain), (u.shape[0],) + (u.shape[1],) * 2)
        for last, W, b in self.layers():
            z = a @ W.T + b
            jac = np.einsum("hk,pkj->phj", W, jac)
            if not last:
                a = np.tanh(z)
                jac = _sech2(z)[:, :, None] * jac
            else:
                a = z
        value = a[:, 0] / self.out_gain + self.out_offset
        return value, np.einsum("pk,pkd->pd", jac[:, 0, :] / self.out_gain, du)


def walk(expr: Expr) -> Iterator[Expr]:
    """Every distinct node of ``expr``, parents before children."""
    seen = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        yield node
        stack.extend(reversed(node.children()))


def replace(expr: Expr, fn: Callable[[Expr], Optional[Expr]]) -> Expr:
    """
    Rebuild ``expr`` with every node for which ``fn`` returns an expression substituted.

    Shared subexpressions stay shared.
    """
    done: Dict[int, Expr] = {}

    def visit(node: Expr) -> Expr:
        if id(node) in done:
            return done[id(node)]
        substitute = fn(node)
        if substitute is None:
            children = node.children()
            new_children = [visit(c) for c in children]
            substitute = node if all(a is b for a, b in zip(children, new_children)) else node.rebuild(new_children)
        done[id(node)] = substitute
        return substitute

    return visit(expr)


def variable_indices(expr: Expr) -> List[int]:
    """Sorted indices of the variables an expression reads."""
    return sorted({node.index for node in walk(expr) if isinstance(node, Var)})


# ---------------------------------------------------------------------------
# Public evaluation and bounding API
# ---------------------------------------------------------------------------


def _as_batch(x, dim: Optional[int] = None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if dim is not None and X.shape[1] != dim:
        raise ExpressionError(f"Point of dimension {X.shape[1]} for a {dim}-dimensional box.")
    return X


def evaluate(expr: Expr, x) -> Tuple[float, np.ndarray]:
    """
    Value and gradient of ``expr`` at one point.

    >>> value, grad = evaluate(Var(0) * Var(1) + 1, [2.0, 3.0])
    >>> value, grad.tolist()
    (7.0, [3.0, 2.0])
    """
    values, grads = _eval(expr, _as_batch(x), {})
    return float(values[0]), grads[0]


def evaluate_many(expr: Expr, X, chunk: int = 65536) -> np.ndarray:
    """Values of ``expr`` at each row of ``X``, computed in chunks."""
    X = _as_batch(X)
    return np.concatenate([_eval(expr, X[i:i + chunk], {})[0] for i in range(0, X.shape[0], chunk)])


def interval_eval(expr: Expr, box: Box) -> Interval:
    """
    Natural interval extension of ``expr`` over ``box``.

    >>> interval_eval(2 * Var(0) + 1, Box([0.0], [1.0]))
    Interval(lo=1.0, hi=3.0)
    """
    lo, hi = _interval(expr, box, {})
    return Interval(float(lo), float(hi))


def relax_batch(expr: Expr, box: Box, X: np.ndarray) -> RelaxValue:
    """McCormick relaxation at every row of ``X`` (fields keep the leading point axis)."""
    return _relax(expr, box, _as_batch(X, box.dim), {})


def relax_eval(expr: Expr, box: Box, x) -> RelaxValue:
    """
    McCormick relaxation of ``expr`` over ``box`` at the point ``x``.

    Parameters
    ----------
    expr : Expr
        The expression.
    box : Box
        The box the relaxation is valid on.
    x : array
        A point of the box.

    Returns
    -------
    RelaxValue
        Interval bounds, relaxation values and subgradients at ``x``.

    >>> r = relax_eval(Var(0) ** 2, Box([-1.0], [2.0]), [0.0])
    >>> float(r.cv), float(r.cc), r.cc_sub.tolist()
    (0.0, 2.0, [1.0])
    """
    X = _as_batch(x, box.dim)
    if not box.contains(X[0], 1e-12):
        raise ExpressionError(f"Relaxation point {X[0].tolist()} is outside {box!r}.")
    r = _relax(expr, box, X, {})
    return RelaxValue(r.lo, r.hi, float(r.cv[0]), float(r.cc[0]), r.cv_sub[0], r.cc_sub[0])


def rbf_term_relax(center: Sequence[float], gamma: float, box: Box, x) -> RelaxValue:
    """Relaxation of ``exp(-gamma ||center - x||^2)`` over ``box`` at ``x``."""
    return relax_eval(Rbf(center, gamma, [Var(k) for k in range(box.dim)]), box, x)


@dataclass(frozen=True)
class AffineCut:
    """Affine function ``value + slope . (y - point)`` bounding an expression on a box."""

    value: float
    slope: np.ndarray
    point: np.ndarray

    def at(self, y) -> float:
        """Value of the affine function at ``y``."""
        return float(self.value + self.slope @ (np.asarray(y, dtype=float) - self.point))


def _frank_wolfe(expr: Expr, box: Box, steps: int, upper: bool) -> Tuple[float, List[AffineCut], Interval]:
    """
    Best bound from affine under- (or over-) estimators along Frank-Wolfe iterates.

    Each iterate gives the affine function of the relaxation's subgradient;
    its minimum over the box (attained at a corner) is a valid bound.
    """
    x = box.midpoint
    sign = -1.0 if upper else 1.0
    best = -math.inf
    cuts: List[AffineCut] = []
    bounds = None
    for t in range(steps + 1):
        r = _relax(expr, box, x[None, :], {})
        if bounds is None:
            bounds = Interval(float(r.lo), float(r.hi))
        value = float(r.cc[0] if upper else r.cv[0])
        slope = r.cc_sub[0] if upper else r.cv_sub[0]
        cuts.append(AffineCut(value, slope.copy(), x.copy()))
        corner = np.where(sign * slope > 0, box.lo, box.hi)
        bound = sign * value + sign * float(slope @ (corner - x))
        best = max(best, bound)
        if sign * value - bound <= 1e-9 * (1.0 + abs(value)):
            break
        x = x + 2.0 / (t + 2.0) * (corner - x)
    return sign * best, cuts, bounds


def lower_bound_objective(expr: Expr, box: Box, steps: int = 5) -> float:
    """
    Valid lower bound of ``expr`` over ``box``.

    The affine underestimator given by the convex relaxation and its
    subgradient is minimized over the box at a corner; this is repeated at
    ``steps`` Frank-Wolfe iterates and the best bound (never below the
    interval bound) is returned.

    >>> lower_bound_objective(Var(0) - 2 * Var(1), Box([0.0, 0.0], [1.0, 1.0]))
    -2.0
    """
    bound, _, bounds = _frank_wolfe(expr, box, steps, upper=False)
    return max(bound, bounds.lo)


def upper_bound(expr: Expr, box: Box, steps: int = 5) -> float:
    """Valid upper bound of ``expr`` over ``box`` (mirror of :func:`lower_bound_objective`)."""
    bound, _, bounds = _frank_wolfe(expr, box, steps, upper=True)
    return min(bound, bounds.hi)


def constraint_bounds(expr: Expr, box: Box, steps: int = 5) -> Interval:
    """
    Bounds of ``expr`` over ``box`` combining interval and relaxation-based bounds.

    >>> constraint_bounds(Var(0) ** 2, Box([1.0], [2.0]))
    Interval(lo=1.0, hi=4.0)
    """
    lower, _, bounds = _frank_wolfe(expr, box, steps, upper=False)
    upper, _, _ = _frank_wolfe(expr, box, steps, upper=True)
    lo = max(lower, bounds.lo)
    hi = min(upper, bounds.hi)
    return Interval(lo, max(lo, hi))


def affine_underestimators(expr: Expr, box: Box, steps: int = 5) -> List[AffineCut]:
    """Affine functions below ``expr`` on ``box`` (used as cutting planes)."""
    return _frank_wolfe(expr, box, steps, upper=False)[1]


def affine_overestimators(expr: Expr, box: Box, steps: int = 5) -> List[AffineCut]:
    """Affine functions above ``expr`` on ``box``."""
    return _frank_wolfe(expr, box, steps, upper=True)[1]


if __name__ == "__main__":
    import doctest

    doctest.testmod()
