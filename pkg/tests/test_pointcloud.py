import numpy as np
import pytest

from sdfforge import pointcloud as pc
from sdfforge.errors import DataError, DegenerateNeighborhoodError

from helpers import brute_force_nn


def fib_sphere(n, r=1.0):
    """Deterministic quasi-uniform sphere samples."""
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5 ** 0.5) * i
    pts = np.stack([np.cos(theta) * np.sin(phi),
                    np.sin(theta) * np.sin(phi),
                    np.cos(phi)], axis=1)
    return r * pts


# ---------------------------------------------------------------------------
# index exactness

def test_kdtree_matches_brute_force():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (5000, 3))
    cloud = pc.OrientedPointCloud(pts)
    queries = rng.uniform(-1, 1, (200, 3))
    d, idx = cloud.nearest(queries)
    bf_idx, bf_d = brute_force_nn(queries, pts)
    np.testing.assert_array_equal(idx, bf_idx)
    np.testing.assert_allclose(d, bf_d, rtol=1e-12)


def test_density_positive():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 2.0, 0]])
    cloud = pc.OrientedPointCloud(pts)
    assert cloud.density > 0


# ---------------------------------------------------------------------------
# normal estimation

def test_normals_on_plane():
    rng = np.random.default_rng(1)
    pts = np.zeros((100, 3))
    pts[:, :2] = rng.uniform(-1, 1, (100, 2))
    normals = pc.estimate_normals(pts, k=10)
    assert np.abs(np.abs(normals[:, 2]) - 1.0).max() < 1e-6
    assert np.abs(normals[:, :2]).max() < 1e-6


def test_normals_on_sphere_near_radial():
    pts = fib_sphere(600)
    normals = pc.estimate_normals(pts, k=16)
    cos = np.abs(np.einsum('ij,ij->i', normals, pts))
    angles = np.degrees(np.arccos(np.clip(cos, -1, 1)))
    assert angles.max() < 5.0, angles.max()


def test_normals_degenerate_collinear():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
    with pytest.raises(DegenerateNeighborhoodError):
        pc.estimate_normals(pts, k=3)


def test_normals_degenerate_coincident():
    pts = np.zeros((5, 3))
    with pytest.raises(DegenerateNeighborhoodError):
        pc.estimate_normals(pts, k=3)


# ---------------------------------------------------------------------------
# orientation

def test_orient_plane_camera_above():
    rng = np.random.default_rng(2)
    pts = np.zeros((50, 3))
    pts[:, :2] = rng.uniform(-1, 1, (50, 2))
    normals = np.tile([0.0, 0.0, -1.0], (50, 1))
    normals[::2] *= -1
    oriented, undecided = pc.orient_normals(pts, normals, [[0, 0, 10.0]])
    assert undecided == 0
    np.testing.assert_allclose(oriented, np.tile([0, 0, 1.0], (50, 1)))
    oriented, _ = pc.orient_normals(pts, normals, [[0, 0, -10.0]])
    np.testing.assert_allclose(oriented, np.tile([0, 0, -1.0], (50, 1)))


def test_orient_sphere_outward():
    pts = fib_sphere(500)
    normals = pc.estimate_normals(pts, k=16)
    # orbit cameras well outside the sphere, covering both hemispheres
    az = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    el = np.where(np.arange(8) % 2 == 0, np.radians(35), -np.radians(35))
    cams = 3 * np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az),
                         np.sin(el)], axis=1)
    oriented, _ = pc.orient_normals(pts, normals, cams)
    outward = np.einsum('ij,ij->i', oriented, pts) > 0
    assert outward.mean() >= 0.99


# ---------------------------------------------------------------------------
# downsampling

def test_downsample_separated_cloud_unchanged():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    cloud = pc.OrientedPointCloud(pts)
    out = pc.downsample_uniform(cloud)
    np.testing.assert_array_equal(out.positions, pts)


def test_downsample_removes_duplicates():
    rng = np.random.default_rng(3)
    base = rng.uniform(-1, 1, (200, 3))
    doubled = np.repeat(base, 2, axis=0)
    cloud = pc.OrientedPointCloud(doubled)
    out = pc.downsample_uniform(cloud)
    # exactly one copy of each duplicated point survives
    assert len(out) == 200
    np.testing.assert_allclose(np.unique(out.positions, axis=0),
                               np.unique(base, axis=0))


def test_downsample_enforces_spacing():
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 1, (10_000, 3))
    cloud = pc.OrientedPointCloud(pts)
    d, _ = cloud.tree.query(pts, k=2, workers=1)
    t = np.percentile(d[:, 1], 90)
    out = pc.downsample_uniform(cloud)
    # brute-force pairwise check on the survivors
    diff = out.positions[:, None, :] - out.positions[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(dist, np.inf)
    assert dist.min() >= t * (1 - 1e-12)


def test_downsample_idempotent():
    rng = np.random.default_rng(5)
    pts = rng.uniform(0, 1, (3000, 3))
    once = pc.downsample_uniform(pc.OrientedPointCloud(pts))
    twice = pc.downsample_uniform(once)
    np.testing.assert_array_equal(once.positions, twice.positions)


def test_thin_backends_agree(monkeypatch):
    from sdfforge import _kernels
    rng = np.random.default_rng(6)
    pts = rng.uniform(0, 1, (4000, 3))
    fast = _kernels.greedy_thin(pts, 0.05)
    monkeypatch.setenv("SDFFORGE_NUMBA", "0")
    slow = _kernels.greedy_thin(pts, 0.05)
    np.testing.assert_array_equal(fast, slow)


# ---------------------------------------------------------------------------
# boundary points

def test_boundary_camera_inside_box():
    pts, skipped = pc.make_boundary_points(
        [[0.2, 0.1, -0.3]], [[0, 0, 1.0]], [-1, -1, -1], [1, 1, 1])
    assert skipped == 0
    np.testing.assert_allclose(pts, [[0.2, 0.1, -0.3]])


def test_boundary_axis_entry():
    pts, skipped = pc.make_boundary_points(
        [[0, 0, 5.0]], [[0, 0, -1.0]], [-1, -1, -1], [1, 1, 1])
    assert skipped == 0
    np.testing.assert_allclose(pts, [[0, 0, 1.0]])


def test_boundary_misses_skipped():
    pts, skipped = pc.make_boundary_points(
        [[0, 0, 5.0]], [[0, 0, 1.0]], [-1, -1, -1], [1, 1, 1])
    assert skipped == 1
    assert pts.shape == (0, 3)


def test_boundary_target_point_to_plane():
    cloud = pc.OrientedPointCloud(np.array([[0.0, 0, 1.0]]),
                                  np.array([[0.0, 0, 1.0]]))
    d = pc.boundary_target_distance(np.array([0.0, 0, 5.0]), cloud, k=1)
    assert d == pytest.approx(4.0)


def test_boundary_target_on_dense_plane():
    rng = np.random.default_rng(7)
    n = 4000
    pts = np.zeros((n, 3))
    pts[:, :2] = rng.uniform(-1, 1, (n, 2))
    normals = np.tile([0.0, 0, 1.0], (n, 1))
    cloud = pc.OrientedPointCloud(pts, normals)
    h = 0.7
    d = pc.boundary_target_distance(np.array([0.0, 0.0, h]), cloud, k=8,
                                    max_angle_deg=60.0)
    assert abs(d - h) < 2 * cloud.density


def test_boundary_target_angle_exclusion_fallback():
    # single neighbor whose normal is perpendicular to the offset: excluded
    # by the 30 degree filter, so the fallback still reports its distance
    cloud = pc.OrientedPointCloud(np.array([[0.0, 0, 0]]),
                                  np.array([[1.0, 0, 0]]))
    d = pc.boundary_target_distance(np.array([0.0, 0, 2.0]), cloud, k=1,
                                    max_angle_deg=30.0)
    assert d == pytest.approx(0.0)


# ---------------------------------------------------------------------------
# PLY round trips

def test_ply_roundtrip_binary(tmp_path):
    rng = np.random.default_rng(8)
    pts = rng.uniform(-1, 1, (100, 3))
    n = rng.normal(size=(100, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    cloud = pc.OrientedPointCloud(pts, n)
    path = tmp_path / "c.ply"
    pc.write_ply(path, cloud, binary=True)
    back = pc.read_ply(path)
    np.testing.assert_allclose(back.positions, pts)
    np.testing.assert_allclose(back.normals, n)


def test_ply_roundtrip_ascii(tmp_path):
    rng = np.random.default_rng(9)
    pts = rng.uniform(-1, 1, (50, 3))
    cloud = pc.OrientedPointCloud(pts)
    path = tmp_path / "c.ply"
    pc.write_ply(path, cloud, binary=False)
    back = pc.read_ply(path)
    np.testing.assert_allclose(back.positions, pts)
    assert back.normals is None


def test_ply_unknown_property_warns(tmp_path):
    path = tmp_path / "c.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property float confidence\nend_header\n"
        "0 0 0 0.5\n1 1 1 0.9\n")
    with pytest.warns(UserWarning, match="confidence"):
        cloud = pc.read_ply(path)
    assert len(cloud) == 2
    np.testing.assert_allclose(cloud.positions[1], [1, 1, 1])


def test_ply_float32_positions(tmp_path):
    path = tmp_path / "c.ply"
    header = ("ply\nformat binary_little_endian 1.0\nelement vertex 3\n"
              "property float x\nproperty float y\nproperty float z\n"
              "end_header\n")
    pts = np.arange(9, dtype="<f4").reshape(3, 3)
    path.write_bytes(header.encode() + pts.tobytes())
    cloud = pc.read_ply(path)
    np.testing.assert_allclose(cloud.positions, pts.astype(np.float64))


def test_ply_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_bytes(b"not a ply at all")
    with pytest.raises(DataError):
        pc.read_ply(path)


def test_boundary_file_roundtrip(tmp_path):
    pts = np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]])
    targets = np.array([0.5, 1.25])
    path = tmp_path / "b.txt"
    pc.write_boundary_file(path, pts, targets)
    p2, t2 = pc.read_boundary_file(path)
    np.testing.assert_array_equal(p2, pts)
    np.testing.assert_array_equal(t2, targets)
