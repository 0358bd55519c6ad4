import numpy as np
import pytest
from scipy.spatial import ConvexHull

from validity_domain.datasets import DatasetSpec, PointCloud, apply_scaler, fit_scaler, generate_dataset
from validity_domain.errors import (
    ConfigurationError,
    DataFormatError,
    DegenerateHullError,
    FacetValidationError,
)
from validity_domain.hull import (
    FacetSystem,
    box_facets,
    build_hull,
    convex_hull_2d,
    convex_hull_3d,
    export_facets,
    facets_from_hull,
    hull_margin,
    import_facets,
    map_facets,
    normalize_facets,
    validate_facets,
)


@pytest.mark.parametrize("seed", range(10))
def test_planar_hull_matches_qhull(seed):
    rng = np.random.default_rng(seed)
    points = rng.uniform(-3.0, 3.0, size=(40, 2))
    ours = convex_hull_2d(PointCloud(points))
    reference = points[ConvexHull(points).vertices]
    assert {tuple(v) for v in ours} == {tuple(v) for v in reference}


def test_planar_hull_is_counter_clockwise():
    rng = np.random.default_rng(3)
    vertices = convex_hull_2d(PointCloud(rng.normal(size=(60, 2))))
    x, y = vertices[:, 0], vertices[:, 1]
    signed_area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert signed_area > 0


def test_facets_contain_their_polygon():
    rng = np.random.default_rng(11)
    points = rng.uniform(0.0, 1.0, size=(80, 2))
    fs = facets_from_hull(convex_hull_2d(PointCloud(points)))
    assert np.allclose(np.linalg.norm(fs.A, axis=1), 1.0)
    assert np.all(hull_margin(fs, points) <= 1e-12)
    assert hull_margin(fs, [2.0, 0.5]) > 0


def test_collinear_points_are_degenerate():
    cloud = PointCloud([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    with pytest.raises(DegenerateHullError):
        convex_hull_2d(cloud)


def test_too_few_distinct_points():
    with pytest.raises(DegenerateHullError):
        convex_hull_2d(PointCloud([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]))


def test_cube_merges_coplanar_triangles():
    corners = np.array([[x, y, z] for x in (-1.0, 1.0) for y in (-1.0, 1.0) for z in (-1.0, 1.0)])
    fs = convex_hull_3d(PointCloud(np.vstack([corners, [[0.0, 0.0, 0.0]]])))
    assert fs.f == 6
    assert np.all(hull_margin(fs, corners) <= 1e-9)
    assert hull_margin(fs, [0.0, 0.0, 0.0]) == pytest.approx(-1.0)


def test_coplanar_points_are_degenerate():
    flat = PointCloud([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 1.0], [0.5, 0.2, 1.0]])
    with pytest.raises(DegenerateHullError):
        convex_hull_3d(flat)


@pytest.mark.parametrize("shape", ["box", "oval", "banana"])
def test_build_hull_in_original_coordinates(shape):
    cloud = generate_dataset(DatasetSpec(shape, n_points=300, seed=5))
    fs, vertices = build_hull(cloud)
    assert fs.dim == 2
    assert np.all(hull_margin(fs, cloud.points) <= 1e-9)
    assert np.all(np.abs(hull_margin(fs, vertices)) <= 1e-9)
    lo, hi = cloud.points.min(axis=0), cloud.points.max(axis=0)
    assert hull_margin(fs, hi + 1.0) > 0
    assert hull_margin(fs, lo - 1.0) > 0


def test_build_hull_rejects_four_dimensions():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigurationError):
        build_hull(PointCloud(rng.normal(size=(30, 4))))


def test_map_facets_preserves_membership():
    rng = np.random.default_rng(8)
    points = rng.uniform([0.0, 100.0], [5.0, 300.0], size=(50, 2))
    scaler = fit_scaler(points)
    fs_scaled = facets_from_hull(convex_hull_2d(PointCloud(apply_scaler(scaler, points))))
    fs = map_facets(fs_scaled, scaler)
    samples = rng.uniform([-1.0, 50.0], [6.0, 350.0], size=(200, 2))
    scaled_margin = hull_margin(fs_scaled, apply_scaler(scaler, samples))
    clear = np.abs(scaled_margin) > 1e-6
    assert np.array_equal(hull_margin(fs, samples)[clear] > 0, scaled_margin[clear] > 0)


def test_box_facets():
    fs = box_facets([-1.0, 0.0], [1.0, 2.0])
    assert fs.f == 4
    assert hull_margin(fs, [0.0, 1.0]) == pytest.approx(-1.0)
    with pytest.raises(ConfigurationError):
        box_facets([1.0], [0.0])


def test_normalize_rejects_zero_rows():
    with pytest.raises(FacetValidationError):
        normalize_facets(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([1.0, 0.0]))


def test_facet_system_shape_check():
    with pytest.raises(DataFormatError):
        FacetSystem(np.ones((3, 2)), np.ones(2))


def test_validate_lists_violating_points():
    fs = box_facets([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(FacetValidationError) as raised:
        validate_facets(fs, [[0.5, 0.5], [2.0, 0.5], [0.5, -1.0]])
    assert raised.value.violating == [1, 2]


def test_facet_csv_import(tmp_path):
    cloud = generate_dataset(DatasetSpec("oval", n_points=200, seed=2))
    fs, _ = build_hull(cloud)
    path = str(tmp_path / "facets.csv")
    export_facets(path, fs)
    imported = import_facets(path, cloud)
    assert np.allclose(imported.A, fs.A) and np.allclose(imported.b, fs.b)


def test_facet_import_scales_rows(tmp_path):
    path = tmp_path / "facets.csv"
    path.write_text("a1,a2,b\n2,0,-2\n0,-3,0\n")
    fs = import_facets(str(path))
    assert fs.A.tolist() == [[1.0, 0.0], [0.0, -1.0]]
    assert fs.b.tolist() == [-1.0, 0.0]


def test_facet_import_checks_points(tmp_path):
    path = tmp_path / "facets.csv"
    path.write_text("a1,a2,b\n1,0,-1\n")
    with pytest.raises(FacetValidationError):
        import_facets(str(path), PointCloud([[0.0, 0.0], [3.0, 0.0]]))


def test_facet_import_errors(tmp_path):
    with pytest.raises(DataFormatError):
        import_facets(str(tmp_path / "missing.csv"))
    bad = tmp_path / "bad.csv"
    bad.write_text("a1,a2,b\n1,x,0\n")
    with pytest.raises(DataFormatError):
        import_facets(str(bad))
