"""Point clouds, synthetic case-study datasets, scaling and time-series lag features."""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DataFormatError, DegenerateDimensionError
from .log import debug, info

ArrayLike = Union[np.ndarray, Sequence[float], Sequence[Sequence[float]]]


@dataclass(frozen=True, eq=False)
class PointCloud:
    """A set of N points in D dimensions, optionally tagged per point."""

    points: np.ndarray
    """(N, D) array of coordinates"""
    labels: Optional[Tuple[str, ...]] = None
    """Optional per-point tags, e.g. "train" / "outlier\""""

    def __post_init__(self):  # noqa: D105
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise DataFormatError(f"A point cloud needs at least one point of dimension >= 1, got shape {points.shape}.")
        if not np.all(np.isfinite(points)):
            raise DataFormatError("A point cloud must only contain finite coordinates.")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)
        if self.labels is not None:
            labels = tuple(str(label) for label in self.labels)
            if len(labels) != points.shape[0]:
                raise DataFormatError(f"Got {len(labels)} labels for {points.shape[0]} points.")
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:  # noqa: D105
        return self.points.shape[0]

    def __repr__(self) -> str:  # noqa: D105
        return f"PointCloud(n_points={self.n_points}, dim={self.dim})"

    @property
    def dim(self) -> int:
        """Dimension D of the points."""
        return self.points.shape[1]

    @property
    def n_points(self) -> int:
        """Number of points N."""
        return self.points.shape[0]

    def subset(self, indices: Sequence[int]) -> "PointCloud":
        """
        Return the cloud restricted to ``indices`` (in the given order).

        >>> PointCloud([[0.0], [1.0], [2.0]]).subset([2, 0]).points.ravel().tolist()
        [2.0, 0.0]
        """
        indices = list(indices)
        labels = None if self.labels is None else tuple(self.labels[i] for i in indices)
        return PointCloud(self.points[indices], labels)


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------

MINMAX = "minmax_to_unit_interval_signed"
STANDARDIZE = "standardize"
IDENTITY = "identity"


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-dimension affine map ``x' = (x - offset) * gain``."""

    mode: str
    offsets: np.ndarray
    gains: np.ndarray

    def __post_init__(self):  # noqa: D105
        offsets = np.array(self.offsets, dtype=float).ravel()
        gains = np.array(self.gains, dtype=float).ravel()
        if offsets.shape != gains.shape:
            raise ConfigurationError("Scaler offsets and gains must have the same length.")
        if not np.all(gains > 0):
            raise ConfigurationError("Scaler gains must be strictly positive.")
        offsets.setflags(write=False)
        gains.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "gains", gains)

    @property
    def dim(self) -> int:
        """Number of scaled dimensions."""
        return self.offsets.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "Scaler":
        """Scaler that leaves ``dim`` dimensions unchanged."""
        return cls(IDENTITY, np.zeros(dim), np.ones(dim))

    def to_dict(self) -> dict:
        """JSON-friendly representation."""
        return {"mode": self.mode, "offsets": self.offsets.tolist(), "gains": self.gains.tolist()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Scaler":
        """Inverse of :meth:`to_dict`."""
        return cls(data["mode"], data["offsets"], data["gains"])


def fit_scaler(data: Union[PointCloud, ArrayLike], mode: str = MINMAX) -> Scaler:
    """
    Fit a per-dimension scaler.

    Parameters
    ----------
    data : PointCloud or array
        Data whose columns are scaled.
    mode : str
        ``"minmax_to_unit_interval_signed"`` maps each column's min to -1 and
        max to +1; ``"standardize"`` maps to zero mean and unit (population)
        variance; ``"identity"`` leaves data unchanged.

    Returns
    -------
    Scaler
        The fitted scaler.

    >>> s = fit_scaler([[0.0], [10.0]])
    >>> float(apply_scaler(s, [5.0])[0])
    0.0
    >>> s = fit_scaler([[1.0], [3.0]], mode=STANDARDIZE)
    >>> float(apply_scaler(s, [3.0])[0])
    1.0
    """
    points = data.points if isinstance(data, PointCloud) else np.array(data, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if points.shape[0] < 1:
        raise DataFormatError("Cannot fit a scaler on empty data.")
    if mode == MINMAX:
        lo, hi = points.min(axis=0), points.max(axis=0)
        for dim in range(points.shape[1]):
            if not hi[dim] > lo[dim]:
                raise DegenerateDimensionError(dim)
        return Scaler(mode, 0.5 * (lo + hi), 2.0 / (hi - lo))
    if mode == STANDARDIZE:
        mean, std = points.mean(axis=0), points.std(axis=0)
        for dim in range(points.shape[1]):
            if not std[dim] > 0:
                raise DegenerateDimensionError(dim, f"Dimension {dim} has zero variance; cannot standardize it.")
        return Scaler(mode, mean, 1.0 / std)
    if mode == IDENTITY:
        return Scaler.identity(points.shape[1])
    raise ConfigurationError(f'Unknown scaler mode "{mode}".')


def apply_scaler(scaler: Scaler, x: ArrayLike) -> np.ndarray:
    """Map ``x`` (one point or an (N, D) array) into scaled coordinates."""
    return (np.asarray(x, dtype=float) - scaler.offsets) * scaler.gains


def invert_scaler(scaler: Scaler, x_scaled: ArrayLike) -> np.ndarray:
    """Map scaled coordinates back to original units."""
    return np.asarray(x_scaled, dtype=float) / scaler.gains + scaler.offsets


# ---------------------------------------------------------------------------
# Synthetic case-study datasets
# ---------------------------------------------------------------------------


def _rotation(angle_deg: float) -> np.ndarray:
    angle = math.radians(angle_deg)
    return np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])


def _uniform_disk(rng: np.random.Generator, n: int, r_inner: float = 0.0, r_outer: float = 1.0) -> np.ndarray:
    radius = np.sqrt(rng.uniform(r_inner**2, r_outer**2, n))
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    return np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])


def _ellipse(rng, n, center, semi_axes, angle_deg=0.0):
    unit = _uniform_disk(rng, n) * np.asarray(semi_axes, dtype=float)
    return unit @ _rotation(angle_deg).T + np.asarray(center, dtype=float)


def _sample_box(rng, n, p):
    lo, hi = np.asarray(p["lo"], dtype=float), np.asarray(p["hi"], dtype=float)
    if p.get("layout", "uniform") == "grid":
        side = int(round(math.sqrt(n)))
        if side * side != n or side < 2:
            raise ConfigurationError(f"A grid layout needs a square number of points (>= 4), got {n}.")
        xs, ys = np.linspace(lo[0], hi[0], side), np.linspace(lo[1], hi[1], side)
        return np.array([(x, y) for y in ys for x in xs])
    return rng.uniform(lo, hi, size=(n, 2))


def _sample_oval(rng, n, p):
    return _ellipse(rng, n, p["center"], p["semi_axes"], p.get("angle_deg", 0.0))


def _sample_box2(rng, n, p):
    half = np.asarray(p["half_widths"], dtype=float)
    local = rng.uniform(-half, half, size=(n, 2))
    return local @ _rotation(p["angle_deg"]).T + np.asarray(p["center"], dtype=float)


def _sample_banana(rng, n, p):
    theta = np.radians(rng.uniform(p["theta_deg"][0], p["theta_deg"][1], n))
    radius = rng.uniform(p["r_inner"], p["r_outer"], n)
    return np.column_stack([radius * np.cos(theta), radius * np.sin(theta)]) + np.asarray(p["center"], dtype=float)


def _sample_two_circles(rng, n, p):
    first = rng.random(n) < 0.5
    points = _uniform_disk(rng, n, 0.0, p["radius"])
    centers = np.where(first[:, None], np.asarray(p["centers"][0]), np.asarray(p["centers"][1]))
    return points + centers


def _sample_two_ovals(rng, n, p):
    first = rng.random(n) < 0.5
    points = _uniform_disk(rng, n) * np.asarray(p["semi_axes"], dtype=float)
    centers = np.where(first[:, None], np.asarray(p["centers"][0]), np.asarray(p["centers"][1]))
    return points + centers


def _sample_box_with_hole(rng, n, p):
    lo, hi = np.asarray(p["lo"], dtype=float), np.asarray(p["hi"], dtype=float)
    return rng.uniform(lo, hi, size=(n, 2))


def _sample_circle_with_hole(rng, n, p):
    return _uniform_disk(rng, n, p["r_inner"], p["r_outer"]) + np.asarray(p["center"], dtype=float)


def _exclude_box_hole(points, p):
    lo, hi = np.asarray(p["hole_lo"], dtype=float), np.asarray(p["hole_hi"], dtype=float)
    return np.all((points > lo) & (points < hi), axis=1)


def _exclude_circle_hole(points, p):
    return np.linalg.norm(points - np.asarray(p["center"], dtype=float), axis=1) < p["r_inner"]


def _bounds_box(p):
    return np.asarray(p["lo"], dtype=float), np.asarray(p["hi"], dtype=float)


def _bounds_ellipse(center, semi_axes, angle_deg):
    a, b = semi_axes
    angle = math.radians(angle_deg)
    ex = math.hypot(a * math.cos(angle), b * math.sin(angle))
    ey = math.hypot(a * math.sin(angle), b * math.cos(angle))
    c = np.asarray(center, dtype=float)
    return c - [ex, ey], c + [ex, ey]


def _bounds_box2(p):
    corners = np.array([[sx, sy] for sx in (-1, 1) for sy in (-1, 1)]) * np.asarray(p["half_widths"], dtype=float)
    corners = corners @ _rotation(p["angle_deg"]).T + np.asarray(p["center"], dtype=float)
    return corners.min(axis=0), corners.max(axis=0)


def _bounds_banana(p):
    theta = np.radians(np.linspace(p["theta_deg"][0], p["theta_deg"][1], 721))
    rim = np.concatenate([r * np.column_stack([np.cos(theta), np.sin(theta)]) for r in (p["r_inner"], p["r_outer"])])
    rim = rim + np.asarray(p["center"], dtype=float)
    return rim.min(axis=0), rim.max(axis=0)


def _bounds_two(p, semi_axes):
    centers = np.asarray(p["centers"], dtype=float)
    semi = np.asarray(semi_axes, dtype=float)
    return centers.min(axis=0) - semi, centers.max(axis=0) + semi


@dataclass(frozen=True)
class _Shape:
    sample: Callable
    bounds: Callable
    defaults: Mapping
    exclusion: Optional[Callable] = None


SHAPES: Dict[str, _Shape] = {
    "box": _Shape(_sample_box, _bounds_box, {"lo": (-2.0, -2.0), "hi": (4.0, 4.0), "layout": "uniform"}),
    "oval": _Shape(
        _sample_oval,
        lambda p: _bounds_ellipse(p["center"], p["semi_axes"], p.get("angle_deg", 0.0)),
        {"center": (1.0, 1.0), "semi_axes": (3.0, 2.0), "angle_deg": 0.0},
    ),
    "box2": _Shape(_sample_box2, _bounds_box2, {"center": (1.0, 1.0), "half_widths": (2.5, 1.2), "angle_deg": 35.0}),
    "banana": _Shape(
        _sample_banana,
        _bounds_banana,
        {"center": (0.5, 3.0), "r_inner": 3.5, "r_outer": 4.8, "theta_deg": (-160.0, -20.0)},
    ),
    "two_circles": _Shape(
        _sample_two_circles,
        lambda p: _bounds_two(p, (p["radius"], p["radius"])),
        {"centers": ((0.2, -1.0), (0.2, 3.0)), "radius": 1.2},
    ),
    "two_ovals": _Shape(
        _sample_two_ovals,
        lambda p: _bounds_two(p, p["semi_axes"]),
        {"centers": ((-1.4, 0.4), (3.4, 0.4)), "semi_axes": (1.6, 0.9)},
    ),
    "box_with_hole": _Shape(
        _sample_box_with_hole,
        _bounds_box,
        {"lo": (-2.0, -2.0), "hi": (4.0, 4.0), "hole_lo": (-0.5, -0.5), "hole_hi": (2.5, 2.5)},
        _exclude_box_hole,
    ),
    "circle_with_hole": _Shape(
        _sample_circle_with_hole,
        lambda p: _bounds_ellipse(p["center"], (p["r_outer"], p["r_outer"]), 0.0),
        {"center": (0.2, 1.0), "r_inner": 1.5, "r_outer": 3.5},
        _exclude_circle_hole,
    ),
}
"""Pinned generator parameters of the eight illustrative case studies"""

CASE_STUDIES: Tuple[str, ...] = (
    "box", "oval", "box2", "banana", "two_circles", "two_ovals", "box_with_hole", "circle_with_hole",
)


@dataclass(frozen=True)
class DatasetSpec:
    """Recipe for one synthetic dataset."""

    shape: str
    """One of the names in :data:`SHAPES`"""
    n_points: int = 600
    """Number of generated points"""
    noise_sigma: float = 0.1
    """Standard deviation of the Gaussian perturbation (truncated at 4 sigma)"""
    seed: int = 7
    """Seed of the random generator"""
    params: Mapping = field(default_factory=dict)
    """Overrides of the shape's pinned parameters"""

    def __post_init__(self):  # noqa: D105
        if self.shape not in SHAPES:
            raise ConfigurationError(f'Unknown dataset shape "{self.shape}". Known shapes: {", ".join(SHAPES)}.')
        if int(self.n_points) < 1:
            raise ConfigurationError(f"n_points must be positive, got {self.n_points}.")
        if not self.noise_sigma >= 0:
            raise ConfigurationError(f"noise_sigma must be nonnegative, got {self.noise_sigma}.")
        unknown = set(self.params) - set(SHAPES[self.shape].defaults)
        if unknown:
            raise ConfigurationError(f'Unknown parameter(s) {sorted(unknown)} for shape "{self.shape}".')

    @property
    def resolved_params(self) -> dict:
        """Pinned parameters with the overrides applied."""
        merged = dict(SHAPES[self.shape].defaults)
        merged.update(self.params)
        return merged


def bounding_box(spec: DatasetSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Documented noise-free bounding box of a shape.

    Generated points lie within this box enlarged by ``4 * noise_sigma``.

    >>> lo, hi = bounding_box(DatasetSpec("box"))
    >>> lo.tolist(), hi.tolist()
    ([-2.0, -2.0], [4.0, 4.0])
    """
    return tuple(np.asarray(v, dtype=float) for v in SHAPES[spec.shape].bounds(spec.resolved_params))


def exclusion_mask(spec: DatasetSpec, points: np.ndarray) -> np.ndarray:
    """Boolean mask of points inside the shape's exclusion region (all False if none)."""
    shape = SHAPES[spec.shape]
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if shape.exclusion is None:
        return np.zeros(points.shape[0], dtype=bool)
    return shape.exclusion(points, spec.resolved_params)


def generate_dataset(spec: DatasetSpec) -> PointCloud:
    """
    Generate the point cloud described by ``spec``.

    Base points are drawn from the shape, perturbed by Gaussian noise whose
    per-coordinate magnitude is truncated at four sigma, and rejected when
    they fall inside the shape's exclusion region. Sampling continues in
    batches until ``n_points`` points are accepted.

    Parameters
    ----------
    spec : DatasetSpec
        The dataset recipe.

    Returns
    -------
    PointCloud
        The generated points, identical for identical specs.

    >>> cloud = generate_dataset(DatasetSpec("box", n_points=4, noise_sigma=0.0,
    ...                                      params={"lo": (0, 0), "hi": (1, 1), "layout": "grid"}))
    >>> cloud.points.tolist()
    [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
    """
    shape = SHAPES[spec.shape]
    params = spec.resolved_params
    rng = np.random.default_rng(spec.seed)
    accepted: List[np.ndarray] = []
    count = 0
    rounds = 0
    while count < spec.n_points:
        rounds += 1
        if rounds > 1000:
            raise ConfigurationError(f'Could not generate {spec.n_points} points for "{spec.shape}"; '
                                     "the exclusion region rejects almost everything.")
        need = spec.n_points - count
        batch = np.asarray(shape.sample(rng, need if rounds == 1 else 2 * need, params), dtype=float)
        if spec.noise_sigma > 0:
            noise = rng.normal(0.0, spec.noise_sigma, size=batch.shape)
            tail = np.abs(noise) > 4.0 * spec.noise_sigma
            while tail.any():
                noise[tail] = rng.normal(0.0, spec.noise_sigma, size=int(tail.sum()))
                tail = np.abs(noise) > 4.0 * spec.noise_sigma
            batch = batch + noise
        if shape.exclusion is not None:
            batch = batch[~shape.exclusion(batch, params)]
        accepted.append(batch[:need])
        count += min(need, batch.shape[0])
    points = np.concatenate(accepted)[: spec.n_points]
    debug(f'Generated {points.shape[0]} points for "{spec.shape}" in {rounds} round(s).')
    return PointCloud(points)


def write_cloud_csv(path: str, cloud: PointCloud):
    """
    Write a point cloud as CSV with header ``x1,...,xD[,label]``.

    Parameters
    ----------
    path : str
        Destination file.
    cloud : PointCloud
        The points to write.
    """
    frame = pd.DataFrame(cloud.points, columns=[f"x{i + 1}" for i in range(cloud.dim)])
    if cloud.labels is not None:
        frame["label"] = list(cloud.labels)
    frame.to_csv(path, index=False, float_format="%.17g")
    debug(f'Wrote {cloud.n_points} point(s) to "{path}".')


def read_cloud_csv(path: str) -> PointCloud:
    """Read a point cloud written by :func:`write_cloud_csv`."""
    frame = pd.read_csv(path)
    coords = [c for c in frame.columns if c != "label"]
    labels = tuple(frame["label"].astype(str)) if "label" in frame.columns else None
    return PointCloud(frame[coords].to_numpy(dtype=float), labels)


# ---------------------------------------------------------------------------
# Time series and lag features
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TimeSeriesTable:
    """Named real-valued columns, rows in file order."""

    names: Tuple[str, ...]
    values: np.ndarray
    """(rows, columns) array"""

    @property
    def n_rows(self) -> int:
        """Number of rows."""
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        """Values of one column."""
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise DataFormatError(f'Column "{name}" not found; available: {", ".join(self.names)}.') from None

    def head(self, n_rows: int) -> "TimeSeriesTable":
        """The first ``n_rows`` rows."""
        return TimeSeriesTable(self.names, self.values[:n_rows])

    def tail(self, start: int) -> "TimeSeriesTable":
        """The rows from ``start`` on."""
        return TimeSeriesTable(self.names, self.values[start:])


def load_timeseries_csv(path: str, column_names: Optional[Sequence[str]] = None) -> TimeSeriesTable:
    """
    Load a comma-separated time series with a header row.

    Parameters
    ----------
    path : str
        The CSV file.
    column_names : sequence of str, optional
        Columns to keep (in this order); all columns when omitted.

    Returns
    -------
    TimeSeriesTable
        The numeric table.

    Raises
    ------
    DataFormatError
        Missing file, empty file, missing column, or a non-numeric cell. Rows
        are counted from 1 for the first data row after the header.
    """
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except FileNotFoundError:
        raise DataFormatError(f'Time-series file "{path}" not found.') from None
    except pd.errors.EmptyDataError:
        raise DataFormatError(f'Time-series file "{path}" is empty.') from None
    if frame.shape[0] == 0:
        raise DataFormatError(f'Time-series file "{path}" has a header but no rows.')
    frame.columns = [str(c).strip() for c in frame.columns]
    names = list(column_names) if column_names is not None else list(frame.columns)
    missing = [name for name in names if name not in frame.columns]
    if missing:
        raise DataFormatError(f'Column(s) {missing} missing from "{path}"; available: {", ".join(frame.columns)}.')
    frame = frame[names]
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna() | ~np.isfinite(numeric.to_numpy(dtype=float))
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise DataFormatError(
            f'Non-numeric cell "{frame.iat[row, col]}" in column "{names[col]}" at row {row + 1} of "{path}".'
        )
    table = TimeSeriesTable(tuple(names), numeric.to_numpy(dtype=float))
    info(f'Loaded {table.n_rows} row(s) and {len(names)} column(s) from "{path}".')
    return table


@dataclass(frozen=True)
class LagSpec:
    """Which signals, at which lags, form a lagged input vector."""

    base_signals: Tuple[str, ...]
    lags: Tuple[int, ...] = (0, 5, 7, 9)

    def __post_init__(self):  # noqa: D105
        lags = tuple(int(lag) for lag in self.lags)
        if not lags or lags[0] < 0 or any(b <= a for a, b in zip(lags, lags[1:])):
            raise ConfigurationError(f"Lags must be nonnegative and strictly increasing, got {self.lags}.")
        if not self.base_signals:
            raise ConfigurationError("A lag specification needs at least one signal.")
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "base_signals", tuple(self.base_signals))

    @property
    def max_lag(self) -> int:
        """Largest lag."""
        return self.lags[-1]

    def feature_names(self) -> List[str]:
        """
        Names of the lagged features, signal-major.

        >>> LagSpec(("a", "b"), (0, 2)).feature_names()
        ['a[k]', 'a[k-2]', 'b[k]', 'b[k-2]']
        """
        return [f"{s}[k]" if lag == 0 else f"{s}[k-{lag}]" for s in self.base_signals for lag in self.lags]


def build_lag_features(table: TimeSeriesTable, lag_spec: LagSpec) -> PointCloud:
    """
    Build lagged input vectors.

    Row ``k`` of the result (for ``k`` from ``max_lag`` on) concatenates, for
    each signal in order, the values at ``k - lag`` for every lag. The first
    ``max_lag`` rows, which lack a full history, are dropped.

    Parameters
    ----------
    table : TimeSeriesTable
        The source time series.
    lag_spec : LagSpec
        Signals and lags.

    Returns
    -------
    PointCloud
        ``n_rows - max_lag`` points of dimension ``len(signals) * len(lags)``.

    >>> ramp = TimeSeriesTable(("t",), np.arange(8.0).reshape(-1, 1))
    >>> build_lag_features(ramp, LagSpec(("t",), (0, 5))).points.tolist()
    [[5.0, 0.0], [6.0, 1.0], [7.0, 2.0]]
    """
    if table.n_rows <= lag_spec.max_lag:
        raise DataFormatError(f"Need more than {lag_spec.max_lag} rows to build lags, got {table.n_rows}.")
    rows = np.arange(lag_spec.max_lag, table.n_rows)
    columns = [table.column(signal)[rows - lag] for signal in lag_spec.base_signals for lag in lag_spec.lags]
    return PointCloud(np.column_stack(columns))


def lagged_targets(table: TimeSeriesTable, names: Sequence[str], lag_spec: LagSpec) -> np.ndarray:
    """Target columns aligned with :func:`build_lag_features` rows."""
    return np.column_stack([table.column(name)[lag_spec.max_lag:] for name in names])


def split_train(n_rows: int, fraction: float = 0.9) -> int:
    """
    Number of leading rows used for training.

    >>> split_train(10000)
    9000
    """
    if not 0 < fraction <= 1:
        raise ConfigurationError(f"Training fraction must be in (0, 1], got {fraction}.")
    return max(1, int(math.floor(n_rows * fraction)))


if __name__ == "__main__":
    import doctest

    doctest.testmod()
