"""
One-class support vector machine with RBF kernel.

The dual problem

    min_a  1/2 a^T K a   s.t.  sum(a) = 1,  0 <= a_i <= 1 / (nu N)

is solved by sequential pairwise updates on the maximal violating pair. The
decision function ``sum_i a_i K(sv_i, x) - rho`` is positive inside the
learned domain.
"""

import functools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .datasets import PointCloud, Scaler, apply_scaler
from .errors import ConfigurationError, ConvergenceError, DataFormatError, ExpressionError
from .log import debug, info, warn
from .relax import Expr, KernelExpansion, Linear, Var, as_expr
from .utils import read_json, write_json

SCHEMA = "validity-domain/ocsvm@1"
"""Schema tag of serialized models"""

DEFAULT_GAMMA_SCHEDULE = (2.0, 1.5, 1.0, 0.75, 0.5, 0.35, 0.25, 0.18, 0.12, 0.08, 0.05)
DEFAULT_CACHE_ROWS = 1024
ETA_FLOOR = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """RBF kernel ``K(x, y) = exp(-gamma ||x - y||^2)``."""

    gamma: float
    kind: str = "rbf"

    def __post_init__(self):  # noqa: D105
        if self.kind != "rbf":
            raise ConfigurationError(f'Only the "rbf" kernel is supported, got "{self.kind}".')
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ConfigurationError(f"Kernel gamma must be a positive number, got {self.gamma}.")

    def matrix(self, X, Y) -> np.ndarray:
        """
        Kernel matrix between the rows of ``X`` and ``Y``.

        >>> KernelSpec(0.25).matrix([[0.0, 0.0]], [[0.0, 0.0], [2.0, 0.0]]).round(4).tolist()
        [[1.0, 0.3679]]
        """
        return np.exp(-self.gamma * cdist(np.atleast_2d(X), np.atleast_2d(Y), "sqeuclidean"))


@dataclass(frozen=True, eq=False)
class OneClassSvmModel:
    """A trained one-class SVM."""

    support_vectors: np.ndarray
    """(M, D) support vectors, in the coordinates the kernel sees"""
    alphas: np.ndarray
    """(M,) dual weights, summing to one"""
    rho: float
    kernel: KernelSpec
    nu: float
    n_train: int
    support_indices: Optional[Tuple[int, ...]] = None
    """Indices of the support vectors in the training cloud"""
    scaler: Optional[Scaler] = None
    """Scaling applied to inputs before the kernel, if any"""

    def __post_init__(self):  # noqa: D105
        sv = np.atleast_2d(np.array(self.support_vectors, dtype=float))
        alphas = np.array(self.alphas, dtype=float).ravel()
        if sv.shape[0] != alphas.shape[0] or sv.shape[0] == 0:
            raise DataFormatError(f"{sv.shape[0]} support vector(s) for {alphas.shape[0]} dual weight(s).")
        if not (np.all(np.isfinite(sv)) and np.all(np.isfinite(alphas)) and math.isfinite(self.rho)):
            raise DataFormatError("A one-class SVM needs finite support vectors, weights and offset.")
        if self.scaler is not None and self.scaler.dim != sv.shape[1]:
            raise DataFormatError(f"Scaler of dimension {self.scaler.dim} for {sv.shape[1]}-dimensional support vectors.")
        sv.setflags(write=False)
        alphas.setflags(write=False)
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "rho", float(self.rho))
        if self.support_indices is not None:
            object.__setattr__(self, "support_indices", tuple(int(i) for i in self.support_indices))

    @property
    def dim(self) -> int:
        """Input dimension D."""
        return self.support_vectors.shape[1]

    @property
    def n_support(self) -> int:
        """Number of support vectors M."""
        return self.support_vectors.shape[0]

    @property
    def gamma(self) -> float:
        """Kernel parameter."""
        return self.kernel.gamma

    @property
    def upper_weight(self) -> float:
        """Box bound ``1 / (nu N)`` of the dual weights."""
        return 1.0 / (self.nu * self.n_train)

    def dual_vector(self) -> np.ndarray:
        """Dual weights of every training point (zero for non-support vectors)."""
        if self.support_indices is None:
            raise DataFormatError("This model does not record the indices of its support vectors.")
        full = np.zeros(self.n_train)
        full[list(self.support_indices)] = self.alphas
        return full


def dual_objective(alphas, K) -> float:
    """
    Dual objective ``1/2 a^T K a``.

    >>> dual_objective([0.5, 0.5], np.ones((2, 2)))
    0.5
    """
    alphas = np.asarray(alphas, dtype=float)
    return float(0.5 * alphas @ np.asarray(K) @ alphas)


def kkt_residual(alphas, K, upper: float) -> float:
    """
    Largest violation of the dual optimality conditions.

    With ``G = K a``, optimality holds when every weight that can still
    increase has a gradient no smaller than every weight that can still
    decrease. The residual is ``max(0, max_{a_j > 0} G_j - min_{a_i < C} G_i)``.
    """
    alphas = np.asarray(alphas, dtype=float)
    G = np.asarray(K) @ alphas
    can_increase = alphas < upper * (1.0 - 1e-12)
    can_decrease = alphas > upper * 1e-12
    if not np.any(can_increase) or not np.any(can_decrease):
        return 0.0
    return max(0.0, float(G[can_decrease].max() - G[can_increase].min()))


def _recover_rho(alphas: np.ndarray, G: np.ndarray, upper: float, tol: float) -> float:
    free = (alphas > tol * upper) & (alphas < upper * (1.0 - tol))
    if np.any(free):
        return float(G[free].mean())
    at_upper = alphas >= upper * (1.0 - tol)
    at_zero = ~at_upper & (alphas <= tol * upper)
    lower = G[at_upper].max() if np.any(at_upper) else G.min()
    upper_bracket = G[at_zero].min() if np.any(at_zero) else G.max()
    return float(0.5 * (lower + upper_bracket))


def _prune(alphas: np.ndarray, upper: float, threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Drop negligible weights and hand their mass to the kept ones, within the box.

    The largest ``ceil(1 / upper)`` weights are always kept, so the kept ones
    can carry a unit sum without leaving the box.

    >>> keep, kept = _prune(np.array([0.3, 0.3, 0.3, 0.05, 0.05]), 0.3, 0.1)
    >>> keep.tolist(), [round(float(a), 12) for a in kept]
    ([0, 1, 2, 3], [0.3, 0.3, 0.3, 0.1])
    """
    needed = int(math.ceil(1.0 / upper))
    n_keep = min(alphas.size, max(int(np.count_nonzero(alphas > threshold)), needed))
    keep = np.sort(np.argsort(-alphas, kind="stable")[:n_keep])
    kept = alphas[keep].copy()
    mass = 1.0 - kept.sum()
    headroom = upper - kept
    if mass > 0 and headroom.sum() > 0:
        kept += mass * headroom / headroom.sum()
    else:
        kept *= 1.0 / kept.sum()
    return keep, np.minimum(kept, upper)


def train(
    cloud: PointCloud,
    nu: float,
    kernel: KernelSpec,
    tol: float = 1e-6,
    max_passes: int = 200,
    cache_rows: int = DEFAULT_CACHE_ROWS,
    scaler: Optional[Scaler] = None,
) -> OneClassSvmModel:
    """
    Train a one-class SVM on ``cloud``.

    Parameters
    ----------
    cloud : PointCloud
        Training points (N >= 2).
    nu : float
        Upper bound on the outlier fraction, in (0, 1) with ``nu * N > 1``.
    kernel : KernelSpec
        The RBF kernel.
    tol : float
        Stop when the maximal KKT violation is at most ``tol``.
    max_passes : int
        Iteration cap, in multiples of N.
    cache_rows : int
        Number of kernel rows kept in the LRU cache.
    scaler : Scaler, optional
        Applied to the points before training, and to inputs at decision time.

    Returns
    -------
    OneClassSvmModel
        Model storing only the support vectors.

    Raises
    ------
    ConfigurationError
        If ``nu`` is outside (0, 1), N < 2 or ``nu * N <= 1``.
    ConvergenceError
        If the iteration cap is reached, reporting the residual violation.

    >>> model = train(PointCloud([[0.0, 0.0], [0.0, 0.0]]), 0.9, KernelSpec(0.5))
    >>> model.alphas.tolist(), model.rho
    ([0.5, 0.5], 1.0)
    """
    N = cloud.n_points
    if not 0 < nu < 1:
        raise ConfigurationError(f"nu must lie in (0, 1), got {nu}.")
    if N < 2:
        raise ConfigurationError("A one-class SVM needs at least two training points.")
    if nu * N <= 1:
        raise ConfigurationError(f"nu * N = {nu * N:g} <= 1 leaves no feasible dual; increase nu or the data.")
    X = cloud.points if scaler is None else apply_scaler(scaler, cloud.points)
    upper = 1.0 / (nu * N)

    @functools.lru_cache(maxsize=cache_rows)
    def row(i: int) -> np.ndarray:
        return kernel.matrix(X[i:i + 1], X)[0]

    alphas = np.full(N, 1.0 / N)
    G = np.empty(N)
    for start in range(0, N, 1024):
        G[start:start + 1024] = kernel.matrix(X[start:start + 1024], X) @ alphas

    max_iterations = max_passes * N
    gap = math.inf
    for iteration in range(max_iterations):
        up = alphas < upper
        down = alphas > 0
        i = int(np.flatnonzero(up)[np.argmin(G[up])])
        j = int(np.flatnonzero(down)[np.argmax(G[down])])
        gap = G[j] - G[i]
        if gap <= tol:
            break
        Ki, Kj = row(i), row(j)
        eta = max(Ki[i] + Kj[j] - 2.0 * Ki[j], ETA_FLOOR)
        step = min(gap / eta, upper - alphas[i], alphas[j])
        if step == upper - alphas[i]:
            alphas[i] = upper
        else:
            alphas[i] += step
        if step == alphas[j]:
            alphas[j] = 0.0
        else:
            alphas[j] -= step
        G += step * (Ki - Kj)
        if iteration % 5000 == 0:
            debug(f"SMO iteration {iteration}: violation {gap:.3e}.")
    else:
        raise ConvergenceError(
            f"One-class SVM training did not converge within {max_passes} passes "
            f"(residual KKT violation {gap:.3e}, tolerance {tol:g})."
        )

    rho = _recover_rho(alphas, G, upper, tol)
    keep, kept = _prune(alphas, upper, tol * upper)
    model = OneClassSvmModel(X[keep], kept, rho, kernel, nu, N, tuple(keep.tolist()), scaler)
    debug(f"SMO stopped after {iteration} iteration(s); cache {row.cache_info().hits} hit(s).")
    debug(f"One-class SVM (nu={nu:g}, gamma={kernel.gamma:g}): {model.n_support} support vector(s), rho={rho:.6g}.")
    return model


def decision(model: OneClassSvmModel, x):
    """
    Decision function ``sum_i a_i exp(-gamma ||sv_i - x||^2) - rho``.

    Parameters
    ----------
    model : OneClassSvmModel
        The model.
    x : array
        One point (D,) or an (n, D) array.

    Returns
    -------
    float or numpy.ndarray
        Positive inside the learned domain, negative outside.

    >>> model = OneClassSvmModel([[0.0, 0.0]], [1.0], 0.5, KernelSpec(0.25), 0.5, 4)
    >>> round(decision(model, [2.0, 0.0]), 4)
    -0.1321
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dim:
        raise ExpressionError(f"Point of dimension {x.shape[-1]} for a {model.dim}-dimensional one-class SVM.")
    X = np.atleast_2d(x)
    if model.scaler is not None:
        X = apply_scaler(model.scaler, X)
    values = model.kernel.matrix(X, model.support_vectors) @ model.alphas - model.rho
    return float(values[0]) if x.ndim == 1 else values


def decision_expression(model: OneClassSvmModel, inputs: Optional[Sequence[Expr]] = None) -> Expr:
    """
    The decision function as an expression of ``inputs`` (default ``x[0..D-1]``).

    >>> model = OneClassSvmModel([[0.0]], [1.0], 0.5, KernelSpec(1.0), 0.5, 4)
    >>> from validity_domain.relax import evaluate
    >>> evaluate(decision_expression(model), [0.0])[0]
    0.5
    """
    inputs = [Var(k) for k in range(model.dim)] if inputs is None else [as_expr(u) for u in inputs]
    if len(inputs) != model.dim:
        raise ExpressionError(f"{len(inputs)} input expression(s) for a {model.dim}-dimensional one-class SVM.")
    if model.scaler is not None:
        inputs = [
            Linear.combine([(gain, u)], -offset * gain)
            for u, offset, gain in zip(inputs, model.scaler.offsets, model.scaler.gains)
        ]
    return KernelExpansion(model.support_vectors, model.alphas, model.gamma, inputs, -model.rho)


@dataclass
class GammaSelection:
    """Outcome of the gamma schedule."""

    gamma: float
    diagnostics: List[Tuple[float, int]]
    """(gamma, number of support vectors) per trained model"""
    plateau_reached: bool
    """False when the schedule ran out before the support-vector count settled"""
    model: OneClassSvmModel
    """Model trained with the selected gamma"""


def select_gamma(
    cloud: PointCloud,
    nu: float,
    gamma_schedule: Sequence[float] = DEFAULT_GAMMA_SCHEDULE,
    plateau: float = 0.05,
    tol: float = 1e-6,
    max_passes: int = 200,
    scaler: Optional[Scaler] = None,
) -> GammaSelection:
    """
    Decrease gamma until the number of support vectors stops dropping.

    Returns the first gamma whose support-vector count dropped by less than
    ``plateau`` (relative) compared with the previous gamma. If that never
    happens, the last gamma is returned with ``plateau_reached`` unset.
    """
    schedule = [float(g) for g in gamma_schedule]
    if not schedule or any(g <= 0 for g in schedule) or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigurationError(f"The gamma schedule must be strictly decreasing positive numbers, got {schedule}.")
    diagnostics: List[Tuple[float, int]] = []
    previous = None
    model = None
    for gamma in schedule:
        model = train(cloud, nu, KernelSpec(gamma), tol, max_passes, scaler=scaler)
        diagnostics.append((gamma, model.n_support))
        if previous is not None and (previous - model.n_support) / previous < plateau:
            info(f"Selected gamma={gamma:g} ({model.n_support} support vectors).")
            return GammaSelection(gamma, diagnostics, True, model)
        previous = model.n_support
    warn(f"Support-vector count did not settle over the gamma schedule; using the last gamma={schedule[-1]:g}.")
    return GammaSelection(schedule[-1], diagnostics, False, model)


@dataclass(frozen=True)
class NuReport:
    """Check of the nu-property on the training data."""

    nu: float
    outlier_fraction: float
    sv_fraction: float
    passed: bool

    def to_dict(self) -> dict:
        """JSON-friendly representation."""
        return {"nu": self.nu, "outlier_fraction": self.outlier_fraction,
                "sv_fraction": self.sv_fraction, "pass": self.passed}


def validate_nu_property(model: OneClassSvmModel, cloud: PointCloud, tol: float = 1e-6) -> NuReport:
    """
    Outlier and support-vector fractions of a model on its training cloud.

    The check passes when the outlier fraction is at most ``nu + 2/N`` and
    the support-vector fraction at least ``nu - 2/N``.
    """
    N = cloud.n_points
    outliers = int(np.count_nonzero(decision(model, cloud.points) < -10.0 * tol))
    outlier_fraction = outliers / N
    sv_fraction = model.n_support / N
    passed = outlier_fraction <= model.nu + 2.0 / N and sv_fraction >= model.nu - 2.0 / N
    return NuReport(model.nu, outlier_fraction, sv_fraction, passed)


def model_to_dict(model: OneClassSvmModel) -> dict:
    """JSON-friendly representation of a model."""
    return {
        "schema": SCHEMA,
        "kernel": model.kernel.kind,
        "nu": model.nu,
        "gamma": model.gamma,
        "rho": model.rho,
        "n_train": model.n_train,
        "support_vectors": model.support_vectors,
        "alphas": model.alphas,
        "support_indices": None if model.support_indices is None else list(model.support_indices),
        "scaler": None if model.scaler is None else model.scaler.to_dict(),
    }


def save_model(path: str, model: OneClassSvmModel):
    """Write a model as JSON."""
    write_json(path, model_to_dict(model))


def load_model(path: str) -> OneClassSvmModel:
    """
    Read a model written by :func:`save_model`.

    Raises
    ------
    DataFormatError
        If the file is missing, has another schema or misses fields.
    """
    try:
        data = read_json(path)
    except FileNotFoundError:
        raise DataFormatError(f'Model file "{path}" not found.') from None
    except ValueError as e:
        raise DataFormatError(f'Model file "{path}" is not valid JSON ({e}).') from None
    if not isinstance(data, dict) or data.get("schema") != SCHEMA:
        raise DataFormatError(f'"{path}" is not a one-class SVM model (expected schema "{SCHEMA}").')
    try:
        scaler = None if data.get("scaler") is None else Scaler.from_dict(data["scaler"])
        return OneClassSvmModel(
            data["support_vectors"],
            data["alphas"],
            float(data["rho"]),
            KernelSpec(float(data["gamma"]), data.get("kernel", "rbf")),
            float(data["nu"]),
            int(data["n_train"]),
            data.get("support_indices"),
            scaler,
        )
    except KeyError as e:
        raise DataFormatError(f'Model file "{path}" lacks the field {e}.') from None


if __name__ == "__main__":
    import doctest

    doctest.testmod()
