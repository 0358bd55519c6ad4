"""Convex hulls of point clouds compiled into linear validity constraints ``A x + b <= 0``."""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import ConvexHull

try:
    from scipy.spatial import QhullError
except ImportError:  # scipy < 1.8
    from scipy.spatial.qhull import QhullError

from .datasets import MINMAX, PointCloud, Scaler, apply_scaler, fit_scaler
from .errors import ConfigurationError, DataFormatError, DegenerateHullError, ExpressionError, FacetValidationError
from .log import debug, info

CROSS_TOLERANCE = 1e-12
"""Cross products below this magnitude count as collinear"""


@dataclass(frozen=True, eq=False)
class FacetSystem:
    """
    Linear description ``{x | A x + b <= 0}`` of a convex polytope.

    Rows of ``A`` are unit outward normals.
    """

    A: np.ndarray
    """(f, D) matrix of facet normals"""
    b: np.ndarray
    """(f,) facet offsets"""

    def __post_init__(self):  # noqa: D105
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float).ravel()
        if A.ndim != 2 or A.shape[0] != b.shape[0] or A.shape[0] == 0:
            raise DataFormatError(f"Facet matrix of shape {A.shape} does not match offsets of shape {b.shape}.")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def f(self) -> int:
        """Number of facets."""
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        """Dimension of the space."""
        return self.A.shape[1]


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))


def convex_hull_2d(cloud: PointCloud) -> np.ndarray:
    """
    Counter-clockwise hull vertices of a planar cloud (monotone chain).

    Boundary points lying on a hull edge are not vertices.

    Parameters
    ----------
    cloud : PointCloud
        At least three points in two dimensions, not all collinear.

    Returns
    -------
    numpy.ndarray
        (V, 2) vertices, counter-clockwise, starting from the lowest-leftmost point.

    Raises
    ------
    DegenerateHullError
        When all points are collinear.

    >>> square = PointCloud([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5], [0.5, 0.0]])
    >>> convex_hull_2d(square).tolist()
    [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    """
    if cloud.dim != 2:
        raise ConfigurationError(f"convex_hull_2d needs two-dimensional points, got {cloud.dim}.")
    points = np.unique(cloud.points, axis=0)
    if points.shape[0] < 3:
        raise DegenerateHullError("A planar hull needs at least three distinct points; use the box fallback.")
    scale = max(1.0, float(np.abs(points).max()))
    tol = CROSS_TOLERANCE * scale * scale

    def chain(ordered) -> List[np.ndarray]:
        hull: List[np.ndarray] = []
        for p in ordered:
            while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) <= tol:
                hull.pop()
            hull.append(p)
        return hull

    lower = chain(points)
    upper = chain(points[::-1])
    vertices = np.array(lower[:-1] + upper[:-1])
    if vertices.shape[0] < 3:
        raise DegenerateHullError("All points are collinear; the hull has no interior. Use the box fallback instead.")
    return vertices


def facets_from_hull(vertices: np.ndarray) -> FacetSystem:
    """
    Facet system of a counter-clockwise polygon.

    Row ``i`` is the outward unit normal of the edge from vertex ``i`` to
    vertex ``i + 1`` and ``b[i] = -a[i] . v[i]``.

    >>> fs = facets_from_hull(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    >>> fs.A.tolist(), fs.b.tolist()
    ([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]], [0.0, -1.0, -1.0, 0.0])
    """
    vertices = np.asarray(vertices, dtype=float)
    edges = np.roll(vertices, -1, axis=0) - vertices
    normals = np.column_stack([edges[:, 1], -edges[:, 0]])
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    normals[normals == 0.0] = 0.0
    offsets = -np.einsum("ij,ij->i", normals, vertices)
    offsets[offsets == 0.0] = 0.0
    return FacetSystem(normals, offsets)


def _merge_coplanar(equations: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    kept: List[np.ndarray] = []
    for row in equations:
        if not any(np.all(np.abs(row - other) <= tol) for other in kept):
            kept.append(row)
    return np.array(kept)


def convex_hull_3d(cloud: PointCloud) -> FacetSystem:
    """
    Facet system of a three-dimensional cloud.

    Qhull triangulates the hull; triangles lying in the same plane are merged
    into one facet.
    """
    if cloud.dim != 3:
        raise ConfigurationError(f"convex_hull_3d needs three-dimensional points, got {cloud.dim}.")
    try:
        hull = ConvexHull(cloud.points)
    except QhullError as e:
        raise DegenerateHullError(f"Qhull failed, the points are probably coplanar ({e}). "
                                  "Use the box fallback instead.") from None
    equations = _merge_coplanar(hull.equations)
    return FacetSystem(equations[:, :-1], equations[:, -1])


def hull_margin(fs: FacetSystem, x) -> np.ndarray:
    """
    Signed membership ``max_i (a_i . x + b_i)``; nonpositive inside.

    Parameters
    ----------
    fs : FacetSystem
        The facets.
    x : array
        One point or an (N, D) array of points.

    Returns
    -------
    float or numpy.ndarray
        Margin of each point.

    >>> unit = box_facets([0.0, 0.0], [1.0, 1.0])
    >>> float(hull_margin(unit, [0.5, 0.5])), float(hull_margin(unit, [1.5, 0.5]))
    (-0.5, 0.5)
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != fs.dim:
        raise ExpressionError(f"Point of dimension {x.shape[-1]} evaluated against a {fs.dim}-dimensional hull.")
    values = x @ fs.A.T + fs.b
    return values.max(axis=-1)


def box_facets(lo: Sequence[float], hi: Sequence[float]) -> FacetSystem:
    """Facets of the axis-aligned box ``[lo, hi]``."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or np.any(hi < lo):
        raise ConfigurationError("Box bounds must have equal lengths and satisfy lo <= hi.")
    eye = np.eye(lo.shape[0])
    return FacetSystem(np.vstack([-eye, eye]), np.concatenate([lo, -hi]))


def normalize_facets(A: np.ndarray, b: np.ndarray) -> FacetSystem:
    """Scale every row of ``[A | b]`` so that ``A`` has unit-norm rows."""
    A, b = np.asarray(A, dtype=float), np.asarray(b, dtype=float).ravel()
    norms = np.linalg.norm(A, axis=1)
    zero = np.flatnonzero(norms <= 1e-300)
    if zero.size:
        raise FacetValidationError(f"Facet row(s) {zero.tolist()} have a zero normal and cannot be normalized.")
    return FacetSystem(A / norms[:, None], b / norms)


def map_facets(fs: FacetSystem, scaler: Scaler) -> FacetSystem:
    """
    Express facets computed in scaled coordinates in original coordinates.

    With ``x' = (x - offset) * gain`` the constraint ``A x' + b <= 0`` becomes
    ``(A * gain) x + (b - (A * gain) . offset) <= 0``, renormalized.
    """
    A = fs.A * scaler.gains
    return normalize_facets(A, fs.b - A @ scaler.offsets)


def validate_facets(fs: FacetSystem, points, tol: float = 1e-6) -> FacetSystem:
    """
    Check that every point satisfies ``A x + b <= tol``.

    Returns the facet system unchanged; raises :class:`FacetValidationError`
    listing the violating point indices otherwise.
    """
    margins = np.atleast_1d(hull_margin(fs, np.atleast_2d(points)))
    violating = np.flatnonzero(margins > tol)
    if violating.size:
        raise FacetValidationError(
            f"{violating.size} point(s) violate the facets by up to {float(margins.max()):.3g} "
            f"(tolerance {tol:g}); first indices: {violating[:10].tolist()}.",
            violating.tolist(),
        )
    return fs


def export_facets(path: str, fs: FacetSystem):
    """Write facets as CSV with header ``a1,...,aD,b``."""
    frame = pd.DataFrame(np.column_stack([fs.A, fs.b]), columns=[f"a{i + 1}" for i in range(fs.dim)] + ["b"])
    frame.to_csv(path, index=False, float_format="%.17g")
    debug(f'Wrote {fs.f} facet(s) to "{path}".')


def import_facets(path: str, points: Optional[PointCloud] = None, tol: float = 1e-6) -> FacetSystem:
    """
    Read facets written by :func:`export_facets` or computed by an external tool.

    Parameters
    ----------
    path : str
        CSV with ``D + 1`` columns, ``A`` then ``b``.
    points : PointCloud, optional
        Training points that must satisfy the facets.
    tol : float
        Violation tolerance of the check against ``points``.

    Returns
    -------
    FacetSystem
        Normalized facets.
    """
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise DataFormatError(f'Facet file "{path}" not found.') from None
    except pd.errors.EmptyDataError:
        raise DataFormatError(f'Facet file "{path}" is empty.') from None
    if frame.shape[1] < 2 or frame.shape[0] < 1:
        raise DataFormatError(f'Facet file "{path}" needs at least one row and two columns.')
    values = frame.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise DataFormatError(f'Facet file "{path}" contains non-numeric cells.')
    fs = normalize_facets(values[:, :-1], values[:, -1])
    if points is not None:
        validate_facets(fs, points.points, tol)
    info(f'Imported {fs.f} facet(s) in {fs.dim} dimension(s) from "{path}".')
    return fs


def build_hull(cloud: PointCloud) -> Tuple[FacetSystem, Optional[np.ndarray]]:
    """
    Convex-hull validity constraints of a training cloud.

    The cloud is scaled to [-1, 1] per dimension, its hull computed there and
    the facets mapped back to original coordinates.

    Returns
    -------
    (FacetSystem, numpy.ndarray or None)
        Facets in original coordinates and, for planar clouds, the hull
        vertices in original coordinates.
    """
    scaler = fit_scaler(cloud, MINMAX)
    scaled = PointCloud(apply_scaler(scaler, cloud.points))
    vertices = None
    if cloud.dim == 2:
        hull_vertices = convex_hull_2d(scaled)
        fs = facets_from_hull(hull_vertices)
        vertices = hull_vertices / scaler.gains + scaler.offsets
    elif cloud.dim == 3:
        fs = convex_hull_3d(scaled)
    else:
        raise ConfigurationError(
            f"Exact hulls are available for two and three dimensions only, got {cloud.dim}; "
            "compute the facets externally and import them."
        )
    fs = validate_facets(map_facets(fs, scaler), cloud.points, 1e-9)
    info(f"Convex hull of {cloud.n_points} point(s): {fs.f} facet(s).")
    return fs, vertices


if __name__ == "__main__":
    import doctest

    doctest.testmod()
