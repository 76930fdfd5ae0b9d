import numpy as np
import pytest

from sdfforge import mesher
from sdfforge.errors import DataError, NumericFaultError

from helpers import mesh_area, mesh_euler_characteristic


class SphereField:
    def __init__(self, r=1.0, center=(0.0, 0.0, 0.0)):
        self.r = r
        self.center = np.asarray(center, dtype=np.float64)

    def values(self, X):
        return np.linalg.norm(np.atleast_2d(X) - self.center, axis=1) - self.r


class ConstantField:
    def __init__(self, c):
        self.c = c

    def values(self, X):
        return np.full(len(np.atleast_2d(X)), self.c)


BOX = mesher.Box([-2, -2, -2], [2, 2, 2])


def test_grid_values_match_direct_eval():
    field = SphereField()
    grid = mesher.evaluate_grid(field, BOX, (3, 3, 3))
    xs, ys, zs = mesher.grid_coords(BOX, (3, 3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                p = np.array([xs[i], ys[j], zs[k]])
                assert grid.values[i, j, k] == pytest.approx(
                    np.linalg.norm(p) - 1.0, abs=0)


def test_grid_order_independent():
    field = SphereField(0.7)
    a = mesher.evaluate_grid(field, BOX, (17, 9, 13), chunk=11)
    b = mesher.evaluate_grid(field, BOX, (17, 9, 13), chunk=100000)
    np.testing.assert_array_equal(a.values, b.values)


def test_grid_nonfinite_raises():
    class BadField:
        def values(self, X):
            v = np.linalg.norm(np.atleast_2d(X), axis=1)
            v[0] = np.nan
            return v

    with pytest.raises(NumericFaultError):
        mesher.evaluate_grid(BadField(), BOX, (4, 4, 4))


def test_sphere_vertices_near_surface():
    grid = mesher.evaluate_grid(SphereField(), BOX, (64, 64, 64))
    mesh = mesher.marching_cubes(grid)
    cell_diag = np.sqrt(3) * 4 / 63
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.abs(r - 1.0).max() < cell_diag


def test_sphere_euler_characteristic():
    grid = mesher.evaluate_grid(SphereField(), BOX, (64, 64, 64))
    mesh = mesher.marching_cubes(grid)
    assert mesh.euler_characteristic() == 2
    assert mesh_euler_characteristic(mesh.vertices, mesh.triangles) == 2


def test_all_positive_grid_empty_mesh():
    grid = mesher.evaluate_grid(ConstantField(0.5), BOX, (8, 8, 8))
    mesh = mesher.marching_cubes(grid)
    assert mesh.n_vertices == 0 and mesh.n_triangles == 0


def test_sphere_area_matches_analytic():
    grid = mesher.evaluate_grid(SphereField(), BOX, (128, 128, 128))
    mesh = mesher.marching_cubes(grid)
    assert mesh.area() == pytest.approx(4 * np.pi, rel=0.02)
    assert mesh_area(mesh.vertices, mesh.triangles) == pytest.approx(
        mesh.area(), rel=1e-12)


def test_winding_outward():
    grid = mesher.evaluate_grid(SphereField(), BOX, (48, 48, 48))
    mesh = mesher.marching_cubes(grid)
    fn = mesh.face_normals()
    cent = mesh.vertices[mesh.triangles].mean(axis=1)
    cent /= np.linalg.norm(cent, axis=1, keepdims=True)
    assert np.all((fn * cent).sum(axis=1) > 0)


def test_field_values_small_at_vertices():
    field = SphereField(1.1, center=(0.13, -0.21, 0.34))
    grid = mesher.evaluate_grid(field, BOX, (64, 64, 64))
    mesh = mesher.marching_cubes(grid)
    cell = 4 / 63
    assert np.abs(field.values(mesh.vertices)).max() < 2 * cell


def test_mirror_symmetry():
    field = SphereField(1.0, center=(0.3, 0.0, 0.0))
    grid = mesher.evaluate_grid(field, BOX, (32, 32, 32))
    mesh = mesher.marching_cubes(grid)
    mirrored = mesher.ScalarGrid(grid.resolution, grid.box,
                                 grid.values[::-1].copy())
    mesh_m = mesher.marching_cubes(mirrored)
    flipped = mesh_m.vertices.copy()
    flipped[:, 0] *= -1
    a = np.array(sorted(map(tuple, np.round(mesh.vertices, 9))))
    b = np.array(sorted(map(tuple, np.round(flipped, 9))))
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_corner_on_iso_tie_break():
    # plane z=0 passes exactly through lattice corners at z=0
    class PlaneField:
        def values(self, X):
            return np.atleast_2d(X)[:, 2]

    grid = mesher.evaluate_grid(PlaneField(), BOX, (9, 9, 9))
    mesh = mesher.marching_cubes(grid)
    assert mesh.n_triangles > 0
    areas = 0.5 * np.linalg.norm(
        np.cross(mesh.vertices[mesh.triangles[:, 1]] - mesh.vertices[mesh.triangles[:, 0]],
                 mesh.vertices[mesh.triangles[:, 2]] - mesh.vertices[mesh.triangles[:, 0]]),
        axis=1)
    assert areas.min() > 0.0
    # total area close to the 4x4 box cross-section
    assert mesh.area() == pytest.approx(16.0, rel=1e-6)


def test_no_nonmanifold_edges_on_sphere():
    grid = mesher.evaluate_grid(SphereField(), BOX, (64, 64, 64))
    mesh = mesher.marching_cubes(grid)
    edges = np.concatenate([mesh.triangles[:, [0, 1]],
                            mesh.triangles[:, [1, 2]],
                            mesh.triangles[:, [2, 0]]])
    edges.sort(axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    assert np.all(counts == 2)


def test_streamed_equals_whole_grid():
    field = SphereField(0.9, center=(0.2, -0.3, 0.1))
    grid = mesher.evaluate_grid(field, BOX, (33, 29, 31))
    whole = mesher.marching_cubes(grid)
    for slabs in (2, 7):
        streamed = mesher.mesh_field(field, BOX, (33, 29, 31),
                                     slab_layers=slabs)
        np.testing.assert_array_equal(whole.vertices, streamed.vertices)
        np.testing.assert_array_equal(whole.triangles, streamed.triangles)


def test_backends_agree(monkeypatch):
    field = SphereField()
    grid = mesher.evaluate_grid(field, BOX, (32, 32, 32))
    fast = mesher.marching_cubes(grid)
    monkeypatch.setenv("SDFFORGE_NUMBA", "0")
    slow = mesher.marching_cubes(grid)
    np.testing.assert_array_equal(fast.vertices, slow.vertices)
    np.testing.assert_array_equal(fast.triangles, slow.triangles)


def test_transform_mesh_roundtrip():
    grid = mesher.evaluate_grid(SphereField(), BOX, (16, 16, 16))
    mesh = mesher.marching_cubes(grid)
    out = mesher.transform_mesh(mesh, scale=0.5, center=[1.0, 2.0, 3.0])
    np.testing.assert_allclose(out.vertices, mesh.vertices / 0.5 + [1, 2, 3])


def test_obj_roundtrip(tmp_path):
    grid = mesher.evaluate_grid(SphereField(), BOX, (16, 16, 16))
    mesh = mesher.marching_cubes(grid)
    path = tmp_path / "m.obj"
    mesher.write_obj(path, mesh)
    back = mesher.read_obj(path)
    np.testing.assert_allclose(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)


def test_ply_mesh_writer(tmp_path):
    grid = mesher.evaluate_grid(SphereField(), BOX, (12, 12, 12))
    mesh = mesher.marching_cubes(grid)
    path = tmp_path / "m.ply"
    mesher.write_ply_mesh(path, mesh)
    raw = path.read_bytes()
    assert raw.startswith(b"ply\nformat binary_little_endian")
    header_end = raw.index(b"end_header\n") + len(b"end_header\n")
    vert_bytes = mesh.n_vertices * 24
    verts = np.frombuffer(raw, dtype="<f8", count=mesh.n_vertices * 3,
                          offset=header_end).reshape(-1, 3)
    np.testing.assert_array_equal(verts, mesh.vertices)
    face = np.frombuffer(raw, dtype=[("n", "u1"), ("idx", "<i4", (3,))],
                         offset=header_end + vert_bytes)
    assert np.all(face["n"] == 3)
    np.testing.assert_array_equal(face["idx"], mesh.triangles)


def test_degenerate_box_rejected():
    with pytest.raises(DataError):
        mesher.Box([0, 0, 0], [0, 1, 1])


def test_resolution_must_be_at_least_two():
    with pytest.raises(DataError):
        mesher.evaluate_grid(SphereField(), BOX, (1, 8, 8))
