import numpy as np
import pytest

from sdfforge import synth
from sdfforge.errors import DataError
from sdfforge.tracer import TraceConfig, pixel_rays, project, sphere_trace

from helpers import fd_gradient


def test_sphere_sdf_values():
    s = synth.SphereSdf(1.0)
    assert synth.analytic_sdf(s, [[2.0, 0, 0]])[0] == pytest.approx(1.0)
    assert synth.analytic_sdf(s, [[0.0, 0, 0]])[0] == pytest.approx(-1.0)


def test_torus_on_surface_point():
    t = synth.TorusSdf(0.6, 0.2)
    assert t.values([[0.6, 0.0, 0.2]])[0] == pytest.approx(0.0, abs=1e-15)


def test_box_sdf_inside_outside():
    b = synth.BoxSdf((0.5, 0.5, 0.5))
    assert b.values([[0.0, 0, 0]])[0] == pytest.approx(-0.5)
    assert b.values([[1.5, 0, 0]])[0] == pytest.approx(1.0)
    # corner region
    assert b.values([[1.0, 1.0, 1.0]])[0] == pytest.approx(np.sqrt(3) * 0.5)


@pytest.mark.parametrize("shape,medial_guard", [
    (synth.SphereSdf(0.8), lambda X: np.linalg.norm(X, axis=1) > 0.05),
    (synth.TorusSdf(0.6, 0.2),
     lambda X: np.linalg.norm(X[:, :2], axis=1) > 0.05),
    (synth.BoxSdf((0.4, 0.5, 0.6)),
     lambda X: np.abs(np.sort(np.abs(X) - [0.4, 0.5, 0.6], axis=1)[:, 2]
                      - np.sort(np.abs(X) - [0.4, 0.5, 0.6], axis=1)[:, 1]) > 1e-3),
    (synth.UnionSdf([synth.SphereSdf(0.3, (-0.5, 0, 0)),
                     synth.SphereSdf(0.3, (0.5, 0, 0))]),
     lambda X: np.abs(np.linalg.norm(X - [-0.5, 0, 0], axis=1)
                      - np.linalg.norm(X - [0.5, 0, 0], axis=1)) > 1e-3),
])
def test_eikonal_property_fd(shape, medial_guard):
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (10_000, 3))
    keep = medial_guard(X) & (np.abs(shape.values(X)) > 1e-3)
    X = X[keep]
    h = 1e-6
    g = np.zeros_like(X)
    for a in range(3):
        dx = np.zeros(3)
        dx[a] = h
        g[:, a] = (shape.values(X + dx) - shape.values(X - dx)) / (2 * h)
    norms = np.linalg.norm(g, axis=1)
    assert np.abs(norms - 1.0).max() < 1e-4


def test_analytic_gradients_match_fd():
    rng = np.random.default_rng(1)
    for shape in (synth.SphereSdf(0.8), synth.TorusSdf(0.6, 0.2)):
        for _ in range(20):
            x = rng.uniform(-0.9, 0.9, 3)
            if abs(shape.values(x.reshape(1, 3))[0]) < 1e-2:
                continue
            g = shape.gradients(x.reshape(1, 3))[0]
            fd = fd_gradient(lambda q: shape.values(q.reshape(1, 3))[0], x)
            np.testing.assert_allclose(g, fd, atol=1e-7)


def test_sphere_hessian_analytic():
    s = synth.SphereSdf(1.0)
    H = s.hessians([[2.0, 0, 0]])[0]
    np.testing.assert_allclose(H, np.diag([0.0, 0.5, 0.5]), atol=1e-14)


def test_sample_scene_exact():
    scene = synth.AnalyticScene(synth.SphereSdf(0.8))
    cloud = synth.sample_scene(scene, 2000, synth.DegradationSpec(), seed=0)
    vals = scene.shape.values(cloud.positions)
    assert np.abs(vals).max() < 1e-12
    radial = cloud.positions / np.linalg.norm(cloud.positions, axis=1,
                                              keepdims=True)
    np.testing.assert_allclose(cloud.normals, radial, atol=1e-12)


def test_sample_scene_hole_filter():
    scene = synth.AnalyticScene(synth.SphereSdf(0.8))
    deg = synth.DegradationSpec(hole_axis=np.array([0, 0, 1.0]),
                                hole_half_angle_deg=30.0)
    cloud = synth.sample_scene(scene, 4000, deg, seed=1)
    cos = cloud.normals @ np.array([0, 0, 1.0])
    assert np.all(cos <= np.cos(np.radians(30.0)) + 1e-12)
    assert len(cloud) < 4000


def test_sample_scene_hole_removes_everything():
    scene = synth.AnalyticScene(synth.SphereSdf(0.8))
    deg = synth.DegradationSpec(hole_axis=np.array([0, 0, 1.0]),
                                hole_half_angle_deg=180.0)
    with pytest.raises(DataError):
        synth.sample_scene(scene, 100, deg, seed=2)


def test_sample_scene_jitter_statistics():
    scene = synth.AnalyticScene(synth.SphereSdf(0.8))
    sigma = 0.01
    cloud = synth.sample_scene(scene, 20_000,
                               synth.DegradationSpec(jitter_sigma=sigma), seed=3)
    d = scene.shape.values(cloud.positions)
    # radial distance-to-surface picks up one gaussian component
    rms = np.sqrt((d ** 2).mean())
    assert abs(rms - sigma) / sigma < 0.2


def test_sample_scene_same_seed_identical():
    scene = synth.AnalyticScene(synth.TorusSdf(0.6, 0.2))
    a = synth.sample_scene(scene, 500, synth.DegradationSpec(0.01), seed=9)
    b = synth.sample_scene(scene, 500, synth.DegradationSpec(0.01), seed=9)
    np.testing.assert_array_equal(a.positions, b.positions)


def test_torus_sampling_uniform_on_surface():
    t = synth.TorusSdf(0.6, 0.2)
    rng = np.random.default_rng(4)
    pts, nrm = t.sample_surface(5000, rng)
    assert np.abs(t.values(pts)).max() < 1e-12
    g = t.gradients(pts)
    np.testing.assert_allclose(nrm, g, atol=1e-9)


def test_orbit_cameras_geometry():
    cams = synth.orbit_cameras(4, radius=2.5, elevation_deg=0.0)
    centers = np.array([c.center for c in cams])
    expected = 2.5 * np.array([[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]])
    np.testing.assert_allclose(centers, expected, atol=1e-12)
    for c in cams:
        err = np.abs(c.rotation.T @ c.rotation - np.eye(3)).max()
        assert err < 1e-12
        uv = project(c, np.zeros((1, 3)))[0]
        np.testing.assert_allclose(uv, [c.cx, c.cy], atol=1e-6)


def test_render_center_pixel_headlight():
    # light along the view axis of camera 0: the center pixel sees a
    # surface normal parallel to the light
    scene = synth.AnalyticScene(synth.SphereSdf(0.8),
                                light_dir=np.array([1.0, 0, 0]),
                                ambient=0.3)
    cams = synth.orbit_cameras(1, radius=2.5, elevation_deg=0.0,
                               width=32, height=32, fx=40, fy=40)
    images, masks = synth.render_views(scene, cams)
    center = images[0][16, 16]
    expected = np.asarray(scene.albedo_rgb) * (0.3 + 0.7 * 1.0)
    np.testing.assert_allclose(center, expected, atol=1e-3)
    assert masks[0][16, 16]
    assert not masks[0][0, 0]
    np.testing.assert_array_equal(images[0][0, 0], [0, 0, 0])


def test_render_hits_on_surface():
    scene = synth.AnalyticScene(synth.SphereSdf(0.8))
    cams = synth.orbit_cameras(2, radius=2.5, elevation_deg=15.0,
                               width=24, height=24, fx=30, fy=30)
    cfg = TraceConfig(hit_tol=1e-6, max_steps=256)
    for cam in cams:
        uu, vv = np.meshgrid(np.arange(24) + 0.5, np.arange(24) + 0.5,
                             indexing="xy")
        o, d = pixel_rays(cam, np.stack([uu.ravel(), vv.ravel()], axis=1))
        res = sphere_trace(scene.shape, o, d, cfg)
        hit_pts = res.points[res.hit]
        assert np.abs(scene.shape.values(hit_pts)).max() <= 1e-6


def test_render_deterministic_and_permutation_equivariant():
    scene = synth.AnalyticScene(synth.SphereSdf(0.8))
    cams = synth.orbit_cameras(3, radius=2.5, elevation_deg=10.0,
                               width=16, height=16, fx=20, fy=20)
    imgs1, _ = synth.render_views(scene, cams)
    imgs2, _ = synth.render_views(scene, cams[::-1])
    for a, b in zip(imgs1, imgs2[::-1]):
        np.testing.assert_array_equal(a, b)


def test_checker_albedo_varies():
    scene = synth.AnalyticScene(synth.SphereSdf(0.8), albedo="checker")
    rng = np.random.default_rng(5)
    X = rng.uniform(-1, 1, (500, 3))
    alb = scene.albedo_at(X)
    assert len(np.unique(alb, axis=0)) == 2


def test_ppm_pgm_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    img = rng.uniform(0, 1, (10, 14, 3))
    p = tmp_path / "i.ppm"
    synth.write_ppm(p, img)
    back = synth.read_ppm(p)
    assert back.shape == (10, 14, 3)
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12
    mask = rng.uniform(size=(10, 14)) > 0.5
    q = tmp_path / "m.pgm"
    synth.write_pgm(q, mask)
    np.testing.assert_array_equal(synth.read_pgm(q), mask)
