"""Vietoris-Rips persistent homology (H0 and H1) and topology summaries."""

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist, pdist, squareform

from .datasets import PointCloud
from .errors import ConfigurationError, DataFormatError, FiltrationTooLargeError
from .log import debug, info

CONVEX_HULL = "convex_hull"
ONE_CLASS_SVM = "one_class_svm"

DEFAULT_MAX_EDGES = 3_000_000
DIAGRAM_COLUMNS = ["dim", "birth", "death"]


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path compression and union by rank."""

    def __init__(self, num: int):  # noqa: D107
        self.parents = list(range(num))
        self.rank = [0] * num

    def find(self, x: int) -> int:
        """Representative of ``x``'s set."""
        root = x
        while self.parents[root] != root:
            root = self.parents[root]
        while self.parents[x] != root:
            self.parents[x], x = root, self.parents[x]
        return root

    def union(self, x: int, y: int) -> bool:
        """
        Merge the sets of ``x`` and ``y``.

        Returns
        -------
        bool
            False when both were already in the same set.

        >>> uf = UnionFind(3)
        >>> uf.union(0, 1), uf.union(1, 0), uf.find(1) == uf.find(0)
        (True, False, True)
        """
        x, y = self.find(x), self.find(y)
        if x == y:
            return False
        if self.rank[x] < self.rank[y]:
            x, y = y, x
        self.parents[y] = x
        if self.rank[x] == self.rank[y]:
            self.rank[x] += 1
        return True


@dataclass(frozen=True, eq=False)
class RipsFiltration:
    """
    Rips filtration of a point cloud up to ``max_eps``, restricted to dimension <= 2.

    Vertices enter at 0, an edge at the distance of its endpoints, a triangle
    at its longest edge. Simplices are ordered by (epsilon, dimension,
    lexicographic vertex tuple). Edges are stored explicitly; triangles are
    enumerated on demand because their number grows cubically.
    """

    distances: np.ndarray
    """(N, N) Euclidean distance matrix"""
    max_eps: float
    edges: np.ndarray
    """(E, 2) vertex pairs ``i < j`` in filtration order"""
    edge_eps: np.ndarray
    """(E,) filtration values of ``edges``"""
    max_dim: int = 2

    @property
    def n_vertices(self) -> int:
        """Number of vertices."""
        return self.distances.shape[0]

    @property
    def n_edges(self) -> int:
        """Number of edges."""
        return self.edges.shape[0]

    def triangle_eps(self, i: int, j: int, k: int) -> float:
        """Filtration value of triangle ``(i, j, k)``."""
        d = self.distances
        return max(d[i, j], d[i, k], d[j, k])

    @cached_property
    def triangles(self) -> List[Tuple[float, Tuple[int, int, int]]]:
        """All triangles with their filtration value, in filtration order."""
        if self.max_dim < 2:
            return []
        n, d = self.n_vertices, self.distances
        found = []
        for i in range(n):
            for j in range(i + 1, n):
                if d[i, j] > self.max_eps:
                    continue
                ks = np.arange(j + 1, n)
                eps = np.maximum(d[i, j], np.maximum(d[i, ks], d[j, ks]))
                keep = eps <= self.max_eps
                found.extend((float(e), (i, j, int(k))) for e, k in zip(eps[keep], ks[keep]))
        found.sort()
        return found

    def simplices(self) -> List[Tuple[Tuple[int, ...], float]]:
        """
        Every simplex with its filtration value, in filtration order.

        >>> f = build_rips(PointCloud([[0.0, 0.0], [1.0, 0.0]]), max_eps=2.0)
        >>> f.simplices()
        [((0,), 0.0), ((1,), 0.0), ((0, 1), 1.0)]
        """
        entries = [(0.0, 0, (v,)) for v in range(self.n_vertices)]
        entries += [(float(e), 1, (int(i), int(j))) for (i, j), e in zip(self.edges, self.edge_eps)]
        entries += [(e, 2, t) for e, t in self.triangles]
        entries.sort()
        return [(simplex, eps) for eps, _, simplex in entries]


def _distance_matrix(points: np.ndarray) -> np.ndarray:
    if points.shape[0] == 1:
        return np.zeros((1, 1))
    return squareform(pdist(points))


def enclosing_diagonal(cloud: PointCloud) -> float:
    """Length of the diagonal of the cloud's axis-aligned bounding box."""
    return float(np.linalg.norm(cloud.points.max(axis=0) - cloud.points.min(axis=0)))


def build_rips(
    cloud: PointCloud, max_eps: Optional[float] = None, max_dim: int = 2, max_edges: int = DEFAULT_MAX_EDGES
) -> RipsFiltration:
    """
    Build the Rips filtration of ``cloud``.

    Parameters
    ----------
    cloud : PointCloud
        The points.
    max_eps : float, optional
        Largest filtration value; defaults to the bounding-box diagonal (never
        below the largest pairwise distance) so the final complex is connected.
    max_dim : int
        1 for the 1-skeleton, 2 to include triangles.
    max_edges : int
        Memory guard on the number of edges.

    Returns
    -------
    RipsFiltration
        The filtration.

    >>> f = build_rips(PointCloud([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]]), max_eps=2.0)
    >>> [round(e, 12) for e, _ in f.triangles]
    [1.0]
    """
    if max_dim not in (1, 2):
        raise ConfigurationError(f"max_dim must be 1 or 2, got {max_dim}.")
    distances = _distance_matrix(cloud.points)
    if max_eps is None:
        max_eps = max(enclosing_diagonal(cloud), float(distances.max()), np.finfo(float).tiny)
    if not max_eps > 0:
        raise ConfigurationError(f"max_eps must be positive, got {max_eps}.")
    n = cloud.n_points
    iu, ju = np.triu_indices(n, k=1)
    eps = distances[iu, ju]
    keep = eps <= max_eps
    if int(keep.sum()) > max_edges:
        raise FiltrationTooLargeError(
            f"The Rips filtration would have {int(keep.sum())} edges (cap {max_edges}); "
            "subsample the cloud (maxmin_subsample) or lower max_eps."
        )
    iu, ju, eps = iu[keep], ju[keep], eps[keep]
    order = np.lexsort((ju, iu, eps))
    edges = np.column_stack([iu[order], ju[order]])
    debug(f"Rips filtration: {n} vertices, {edges.shape[0]} edges up to eps={max_eps:.6g}.")
    return RipsFiltration(distances, float(max_eps), edges, eps[order], max_dim)


@dataclass(frozen=True)
class PersistencePair:
    """Birth and death of one homology class."""

    dim: int
    birth: float
    death: float

    @property
    def persistence(self) -> float:
        """Lifespan ``death - birth`` (infinite for essential classes)."""
        return self.death - self.birth

    @property
    def is_finite(self) -> bool:
        """Whether the class dies within the filtration."""
        return math.isfinite(self.death)


@dataclass(frozen=True)
class PersistenceDiagram:
    """Persistence pairs of H0 and H1."""

    pairs: Tuple[PersistencePair, ...]
    n_points: int

    def of_dim(self, dim: int) -> List[PersistencePair]:
        """Pairs of one homology dimension."""
        return [p for p in self.pairs if p.dim == dim]

    def finite_deaths(self, dim: int) -> np.ndarray:
        """Death values of the finite pairs of one dimension."""
        return np.array([p.death for p in self.pairs if p.dim == dim and p.is_finite])


def _h0_pairs(filtration: RipsFiltration) -> Tuple[List[PersistencePair], np.ndarray]:
    """Elder-rule H0 pairs via union-find over the sorted edges; returns the MST edge mask too."""
    uf = UnionFind(filtration.n_vertices)
    negative = np.zeros(filtration.n_edges, dtype=bool)
    pairs = []
    for index, ((i, j), eps) in enumerate(zip(filtration.edges, filtration.edge_eps)):
        if uf.union(int(i), int(j)):
            negative[index] = True
            pairs.append(PersistencePair(0, 0.0, float(eps)))
    components = len({uf.find(v) for v in range(filtration.n_vertices)})
    pairs.extend(PersistencePair(0, 0.0, math.inf) for _ in range(components))
    return pairs, negative


def _reduce_standard(filtration: RipsFiltration, negative: np.ndarray) -> List[PersistencePair]:
    """H1 pairs by column reduction of the Z/2 boundary matrix of triangles over edges."""
    edge_index: Dict[Tuple[int, int], int] = {
        (int(i), int(j)): idx for idx, (i, j) in enumerate(filtration.edges)
    }
    pivots: Dict[int, set] = {}
    pairs = []
    for eps, (i, j, k) in filtration.triangles:
        column = {edge_index[(i, j)], edge_index[(i, k)], edge_index[(j, k)]}
        while column:
            low = max(column)
            if low not in pivots:
                pivots[low] = column
                birth = float(filtration.edge_eps[low])
                if eps > birth:
                    pairs.append(PersistencePair(1, birth, eps))
                break
            column = column ^ pivots[low]
    for idx in range(filtration.n_edges):
        if not negative[idx] and idx not in pivots:
            pairs.append(PersistencePair(1, float(filtration.edge_eps[idx]), math.inf))
    return pairs


def _reduce_cohomology(filtration: RipsFiltration, negative: np.ndarray) -> List[PersistencePair]:
    """
    H1 pairs by reducing the coboundary matrix (edges in reverse filtration order).

    Edges that kill an H0 class are cleared. A column holds triangle ids sorted
    by (epsilon, id); its pivot is the earliest cofacet in filtration order.
    """
    n, d = filtration.n_vertices, filtration.distances
    pivots: Dict[int, int] = {}
    columns: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
    pairs = []
    vertices = np.arange(n)
    for idx in range(filtration.n_edges - 1, -1, -1):
        if negative[idx]:
            continue
        i, j = (int(v) for v in filtration.edges[idx])
        birth = float(filtration.edge_eps[idx])
        others = vertices[(vertices != i) & (vertices != j)]
        eps = np.maximum(birth, np.maximum(d[i, others], d[j, others]))
        keep = eps <= filtration.max_eps
        others, eps = others[keep], eps[keep]
        triples = np.sort(np.column_stack([np.full(others.shape, i), np.full(others.shape, j), others]), axis=1)
        ids = (triples[:, 0] * n + triples[:, 1]) * n + triples[:, 2]
        order = np.lexsort((ids, eps))
        ids, eps = ids[order], eps[order]
        while ids.size:
            owner = pivots.get(int(ids[0]))
            if owner is None:
                pivots[int(ids[0])] = idx
                columns[idx] = (ids, eps)
                if eps[0] > birth:
                    pairs.append(PersistencePair(1, birth, float(eps[0])))
                break
            other_ids, other_eps = columns[owner]
            merged_ids = np.concatenate([ids, other_ids])
            merged_eps = np.concatenate([eps, other_eps])
            unique, first, counts = np.unique(merged_ids, return_index=True, return_counts=True)
            odd = counts % 2 == 1
            ids, eps = unique[odd], merged_eps[first[odd]]
            order = np.lexsort((ids, eps))
            ids, eps = ids[order], eps[order]
        else:
            pairs.append(PersistencePair(1, birth, math.inf))
    return pairs


def compute_persistence(filtration: RipsFiltration, method: str = "cohomology") -> PersistenceDiagram:
    """
    Compute the H0 and H1 persistence diagram of a Rips filtration.

    H0 follows the elder rule with union-find over edges, so finite H0 deaths
    are the edge lengths of a Euclidean minimum spanning tree. H1 comes from a
    Z/2 matrix reduction, either of the boundary matrix (``"standard"``) or,
    with identical pairs, of the coboundary matrix with clearing
    (``"cohomology"``). H1 pairs with zero persistence are dropped.

    Parameters
    ----------
    filtration : RipsFiltration
        The filtration.
    method : str
        ``"cohomology"`` (default) or ``"standard"``.

    Returns
    -------
    PersistenceDiagram
        The diagram; it always holds exactly N H0 pairs.

    >>> square = PointCloud([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    >>> diagram = compute_persistence(build_rips(square, max_eps=2.0))
    >>> [(p.birth, round(p.death, 12)) for p in diagram.of_dim(1)]
    [(1.0, 1.414213562373)]
    """
    h0, negative = _h0_pairs(filtration)
    if filtration.max_dim < 2:
        h1 = [PersistencePair(1, float(e), math.inf) for e, neg in zip(filtration.edge_eps, negative) if not neg]
    elif method == "standard":
        h1 = _reduce_standard(filtration, negative)
    elif method == "cohomology":
        h1 = _reduce_cohomology(filtration, negative)
    else:
        raise ConfigurationError(f'Unknown persistence method "{method}".')
    h1.sort(key=lambda p: (p.birth, p.death))
    debug(f"Persistence: {len(h0)} H0 pair(s), {len(h1)} H1 pair(s).")
    return PersistenceDiagram(tuple(h0 + h1), filtration.n_vertices)


def betti_numbers(diagram: PersistenceDiagram, eps: float) -> Tuple[int, int]:
    """
    Betti numbers at filtration value ``eps`` (pairs with birth <= eps < death).

    >>> d = PersistenceDiagram((PersistencePair(0, 0.0, math.inf), PersistencePair(0, 0.0, 1.0)), 2)
    >>> betti_numbers(d, 0.5), betti_numbers(d, 1.0)
    ((2, 0), (1, 0))
    """
    counts = [0, 0]
    for p in diagram.pairs:
        if p.birth <= eps < p.death:
            counts[p.dim] += 1
    return counts[0], counts[1]


@dataclass(frozen=True)
class Subsample:
    """Result of farthest-point subsampling."""

    cloud: PointCloud
    indices: Tuple[int, ...]
    hausdorff: float
    """Largest distance from an input point to its nearest selected point"""


def maxmin_subsample(cloud: PointCloud, m: int, seed: int = 7) -> Subsample:
    """
    Greedy farthest-point (maxmin) subsampling.

    Starts from a seeded random point and repeatedly adds the point farthest
    from the current selection.

    Parameters
    ----------
    cloud : PointCloud
        The input points.
    m : int
        Number of points to keep, ``1 <= m <= N``.
    seed : int
        Seed for the choice of the first point.

    Returns
    -------
    Subsample
        Selected points, their indices, and the Hausdorff distance to the input.
    """
    if not 1 <= m <= cloud.n_points:
        raise ConfigurationError(f"Cannot subsample {m} point(s) out of {cloud.n_points}.")
    rng = np.random.default_rng(seed)
    points = cloud.points
    chosen = [int(rng.integers(cloud.n_points))]
    nearest = cdist(points, points[chosen[0]][None, :]).ravel()
    taken = np.zeros(cloud.n_points, dtype=bool)
    taken[chosen[0]] = True
    while len(chosen) < m:
        # duplicates of a chosen point are at distance 0, same as the point itself
        idx = int(np.argmax(np.where(taken, -1.0, nearest)))
        taken[idx] = True
        chosen.append(idx)
        nearest = np.minimum(nearest, cdist(points, points[idx][None, :]).ravel())
    hausdorff = float(nearest.max())
    debug(f"Maxmin subsample: kept {m} of {cloud.n_points} point(s), Hausdorff distance {hausdorff:.4g}.")
    return Subsample(cloud.subset(chosen), tuple(chosen), hausdorff)


@dataclass(frozen=True)
class TopologySummary:
    """Counts of long-lived clusters and holes, and the validity-model recommendation."""

    n_long_clusters: int
    n_long_holes: int
    cluster_gap_scale: float
    """Largest finite H0 death (0 when there is none)"""
    hole_scales: Tuple[Tuple[float, float], ...]
    """(birth, death) of the long H1 pairs"""
    recommendation: str
    threshold: float = 3.0

    def to_dict(self) -> dict:
        """JSON-friendly representation."""
        return {
            "n_long_clusters": self.n_long_clusters,
            "n_long_holes": self.n_long_holes,
            "cluster_gap_scale": self.cluster_gap_scale,
            "hole_scales": [list(s) for s in self.hole_scales],
            "recommendation": self.recommendation,
            "threshold": self.threshold,
        }


def summarize(diagram: PersistenceDiagram, persistence_ratio_threshold: float = 3.0) -> TopologySummary:
    """
    Count significant clusters and holes and recommend a validity model.

    A finite H0 death is a cluster gap when it is at least ``threshold`` times
    the median finite H0 death. An H1 pair is a hole when its persistence is at
    least ``threshold`` times the median finite H0 death and, when there are
    three or more finite H1 pairs, also at least ``threshold`` times their
    median persistence.

    Parameters
    ----------
    diagram : PersistenceDiagram
        The diagram.
    persistence_ratio_threshold : float
        Significance ratio.

    Returns
    -------
    TopologySummary
        ``one_class_svm`` when there is more than one cluster or any hole,
        ``convex_hull`` otherwise.

    >>> d = PersistenceDiagram(tuple([PersistencePair(0, 0.0, math.inf)] +
    ...                              [PersistencePair(0, 0.0, 1.0)] * 5), 6)
    >>> summarize(d).recommendation
    'convex_hull'
    """
    threshold = persistence_ratio_threshold
    h0_deaths = diagram.finite_deaths(0)
    h0_median = float(np.median(h0_deaths)) if h0_deaths.size else 0.0
    gaps = h0_deaths[h0_deaths >= threshold * h0_median] if h0_deaths.size and h0_median > 0 else h0_deaths[:0]
    n_essential = sum(1 for p in diagram.of_dim(0) if not p.is_finite)
    n_clusters = max(1, n_essential) + int(gaps.size)

    h1 = [p for p in diagram.of_dim(1) if p.is_finite]
    lifetimes = np.array([p.persistence for p in h1])
    floor = threshold * h0_median
    if lifetimes.size >= 3:
        floor = max(floor, threshold * float(np.median(lifetimes)))
    long_holes = [p for p in h1 if p.persistence >= floor and p.persistence > 0]

    recommendation = ONE_CLASS_SVM if n_clusters > 1 or long_holes else CONVEX_HULL
    return TopologySummary(
        n_long_clusters=n_clusters,
        n_long_holes=len(long_holes),
        cluster_gap_scale=float(h0_deaths.max()) if h0_deaths.size else 0.0,
        hole_scales=tuple((p.birth, p.death) for p in long_holes),
        recommendation=recommendation,
        threshold=threshold,
    )


@dataclass(frozen=True)
class TdaSettings:
    """How a cloud is analysed."""

    max_eps: Optional[float] = None
    subsample_cap: int = 512
    threshold: float = 3.0
    seed: int = 7
    method: str = "cohomology"
    max_edges: int = DEFAULT_MAX_EDGES


@dataclass(frozen=True)
class TopologyReport:
    """Everything produced by :func:`analyze`."""

    diagram: PersistenceDiagram
    summary: TopologySummary
    analysed: PointCloud
    hausdorff: float = 0.0
    extras: dict = field(default_factory=dict)


def analyze(cloud: PointCloud, settings: TdaSettings = TdaSettings()) -> TopologyReport:
    """
    Subsample (when larger than the cap), build the Rips filtration, compute persistence and summarize.

    Parameters
    ----------
    cloud : PointCloud
        The training inputs.
    settings : TdaSettings
        Analysis settings.

    Returns
    -------
    TopologyReport
        Diagram, summary, the analysed (possibly subsampled) cloud and its
        Hausdorff distance to the input.
    """
    hausdorff = 0.0
    analysed = cloud
    if cloud.n_points > settings.subsample_cap:
        sub = maxmin_subsample(cloud, settings.subsample_cap, settings.seed)
        analysed, hausdorff = sub.cloud, sub.hausdorff
        info(f"Subsampled {cloud.n_points} point(s) to {analysed.n_points} (Hausdorff distance {hausdorff:.4g}).")
    filtration = build_rips(analysed, settings.max_eps, 2, settings.max_edges)
    diagram = compute_persistence(filtration, settings.method)
    summary = summarize(diagram, settings.threshold)
    info(
        f"Topology: {summary.n_long_clusters} cluster(s), {summary.n_long_holes} hole(s) "
        f"-> {summary.recommendation}."
    )
    return TopologyReport(diagram, summary, analysed, hausdorff)


def write_diagram_csv(path: str, diagram: PersistenceDiagram):
    """
    Write a diagram as CSV rows ``dim,birth,death`` (``inf`` for essential classes).

    Parameters
    ----------
    path : str
        Destination file.
    diagram : PersistenceDiagram
        The diagram.
    """
    frame = pd.DataFrame(
        {
            "dim": [p.dim for p in diagram.pairs],
            "birth": [float(p.birth) for p in diagram.pairs],
            "death": [float(p.death) if p.is_finite else math.inf for p in diagram.pairs],
        },
        columns=DIAGRAM_COLUMNS,
    )
    frame.to_csv(path, index=False)


def read_diagram_csv(path: str, n_points: Optional[int] = None) -> PersistenceDiagram:
    """Read a diagram written by :func:`write_diagram_csv`."""
    try:
        frame = pd.read_csv(path, dtype={"dim": int, "birth": float, "death": float})
    except FileNotFoundError:
        raise DataFormatError(f'Diagram file "{path}" not found.') from None
    except (pd.errors.EmptyDataError, ValueError):
        raise DataFormatError(f'Diagram file "{path}" is not a table of {",".join(DIAGRAM_COLUMNS)} rows.') from None
    if list(frame.columns) != DIAGRAM_COLUMNS:
        raise DataFormatError(f'Diagram file "{path}" needs the columns {",".join(DIAGRAM_COLUMNS)}.')
    pairs = [PersistencePair(int(dim), float(birth), float(death))
             for dim, birth, death in frame.itertuples(index=False)]
    if n_points is None:
        n_points = sum(1 for p in pairs if p.dim == 0)
    return PersistenceDiagram(tuple(pairs), n_points)


if __name__ == "__main__":
    import doctest

    doctest.testmod()
