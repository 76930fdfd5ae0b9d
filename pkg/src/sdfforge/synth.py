"""Analytic test scenes: exact signed distance fields, oriented surface
sampling with controlled degradation, orbit cameras, and a reference
Lambertian renderer. Every pipeline stage can be checked against these.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .mesher import Box
from .tracer import Camera, TraceConfig, pixel_rays, sphere_trace


# ---------------------------------------------------------------------------
# analytic signed distance fields

class SphereSdf:
    def __init__(self, radius=0.8, center=(0.0, 0.0, 0.0)):
        if radius <= 0:
            raise ConfigError("sphere radius must be positive")
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=np.float64)

    def values(self, X):
        return np.linalg.norm(np.atleast_2d(X) - self.center, axis=1) - self.radius

    def gradients(self, X):
        d = np.atleast_2d(X) - self.center
        r = np.linalg.norm(d, axis=1, keepdims=True)
        return d / np.maximum(r, 1e-300)

    def hessians(self, X):
        d = np.atleast_2d(X) - self.center
        r = np.linalg.norm(d, axis=1)
        u = d / np.maximum(r[:, None], 1e-300)
        eye = np.eye(3)[None]
        return (eye - u[:, :, None] * u[:, None, :]) / r[:, None, None]

    def area(self):
        return 4.0 * np.pi * self.radius ** 2

    def sample_surface(self, n, rng):
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return self.center + self.radius * d, d


class TorusSdf:
    """Ring around the z axis: major radius R, tube radius r."""

    def __init__(self, major=0.6, minor=0.2, center=(0.0, 0.0, 0.0)):
        if major <= 0 or minor <= 0 or minor >= major:
            raise ConfigError("torus needs 0 < minor < major")
        self.major = float(major)
        self.minor = float(minor)
        self.center = np.asarray(center, dtype=np.float64)

    def values(self, X):
        d = np.atleast_2d(X) - self.center
        rho = np.linalg.norm(d[:, :2], axis=1)
        return np.hypot(rho - self.major, d[:, 2]) - self.minor

    def gradients(self, X):
        d = np.atleast_2d(X) - self.center
        rho = np.maximum(np.linalg.norm(d[:, :2], axis=1), 1e-300)
        a = rho - self.major
        ell = np.maximum(np.hypot(a, d[:, 2]), 1e-300)
        g = np.empty_like(d)
        g[:, 0] = (a / ell) * (d[:, 0] / rho)
        g[:, 1] = (a / ell) * (d[:, 1] / rho)
        g[:, 2] = d[:, 2] / ell
        return g

    def area(self):
        return 4.0 * np.pi ** 2 * self.major * self.minor

    def sample_surface(self, n, rng):
        # tube angle density is proportional to (R + r cos v): rejection
        out_pts = np.empty((n, 3))
        out_nrm = np.empty((n, 3))
        done = 0
        while done < n:
            m = 2 * (n - done) + 16
            u = rng.uniform(0, 2 * np.pi, m)
            v = rng.uniform(0, 2 * np.pi, m)
            accept = rng.uniform(0, 1, m) < (
                (self.major + self.minor * np.cos(v)) / (self.major + self.minor))
            u, v = u[accept], v[accept]
            take = min(len(u), n - done)
            u, v = u[:take], v[:take]
            ring = self.major + self.minor * np.cos(v)
            pts = np.stack([ring * np.cos(u), ring * np.sin(u),
                            self.minor * np.sin(v)], axis=1)
            nrm = np.stack([np.cos(v) * np.cos(u), np.cos(v) * np.sin(u),
                            np.sin(v)], axis=1)
            out_pts[done:done + take] = self.center + pts
            out_nrm[done:done + take] = nrm
            done += take
        return out_pts, out_nrm


class BoxSdf:
    def __init__(self, half_extents=(0.5, 0.5, 0.5), center=(0.0, 0.0, 0.0)):
        self.half = np.asarray(half_extents, dtype=np.float64)
        if np.any(self.half <= 0):
            raise ConfigError("box half extents must be positive")
        self.center = np.asarray(center, dtype=np.float64)

    def values(self, X):
        q = np.abs(np.atleast_2d(X) - self.center) - self.half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def gradients(self, X):
        d = np.atleast_2d(X) - self.center
        q = np.abs(d) - self.half
        g = np.zeros_like(d)
        out = q.max(axis=1) > 0
        qo = np.maximum(q[out], 0.0)
        nrm = np.linalg.norm(qo, axis=1, keepdims=True)
        g[out] = qo / np.maximum(nrm, 1e-300) * np.sign(d[out])
        ins = ~out
        if np.any(ins):
            ax = q[ins].argmax(axis=1)
            rows = np.nonzero(ins)[0]
            g[rows, ax] = np.sign(d[rows, ax])
        return g

    def area(self):
        a, b, c = self.half * 2
        return 2 * (a * b + b * c + a * c)

    def sample_surface(self, n, rng):
        ext = self.half * 2
        face_areas = np.array([ext[1] * ext[2], ext[1] * ext[2],
                               ext[0] * ext[2], ext[0] * ext[2],
                               ext[0] * ext[1], ext[0] * ext[1]])
        face = rng.choice(6, size=n, p=face_areas / face_areas.sum())
        uv = rng.uniform(-1, 1, (n, 2))
        pts = np.empty((n, 3))
        nrm = np.zeros((n, 3))
        for f in range(6):
            m = face == f
            axis, sign = divmod(f, 2)
            sign = 1.0 if sign == 0 else -1.0
            others = [a for a in range(3) if a != axis]
            pts[m, axis] = sign * self.half[axis]
            pts[m, others[0]] = uv[m, 0] * self.half[others[0]]
            pts[m, others[1]] = uv[m, 1] * self.half[others[1]]
            nrm[m, axis] = sign
        return self.center + pts, nrm


class UnionSdf:
    """Min combination; exact wherever the members are disjoint."""

    def __init__(self, members):
        if not members:
            raise ConfigError("union needs at least one member")
        self.members = list(members)

    def values(self, X):
        return np.min([m.values(X) for m in self.members], axis=0)

    def gradients(self, X):
        vals = np.stack([m.values(X) for m in self.members])
        grads = np.stack([m.gradients(X) for m in self.members])
        pick = vals.argmin(axis=0)
        return grads[pick, np.arange(grads.shape[1])]

    def hessians(self, X):
        vals = np.stack([m.values(X) for m in self.members])
        hess = np.stack([m.hessians(X) for m in self.members])
        pick = vals.argmin(axis=0)
        return hess[pick, np.arange(hess.shape[1])]

    def area(self):
        return sum(m.area() for m in self.members)

    def sample_surface(self, n, rng):
        areas = np.array([m.area() for m in self.members])
        counts = rng.multinomial(n, areas / areas.sum())
        pts, nrm = [], []
        for m, c in zip(self.members, counts):
            if c:
                p, nn = m.sample_surface(c, rng)
                pts.append(p)
                nrm.append(nn)
        return np.concatenate(pts), np.concatenate(nrm)


def analytic_sdf(shape, x):
    """Exact signed distance of a shape at query locations."""
    return shape.values(x)


# ---------------------------------------------------------------------------
# scenes

@dataclass
class DegradationSpec:
    jitter_sigma: float = 0.0
    hole_axis: np.ndarray | None = None
    hole_half_angle_deg: float = 0.0
    normal_noise_deg: float = 0.0

    def __post_init__(self):
        if self.jitter_sigma < 0 or self.hole_half_angle_deg < 0 \
                or self.normal_noise_deg < 0:
            raise ConfigError("degradation parameters must be non-negative")
        if self.hole_axis is not None:
            self.hole_axis = np.asarray(self.hole_axis, dtype=np.float64)
            self.hole_axis = self.hole_axis / np.linalg.norm(self.hole_axis)


@dataclass
class AnalyticScene:
    shape: object
    albedo: str = "constant"           # constant | checker
    albedo_rgb: tuple = (0.75, 0.45, 0.30)
    albedo_rgb_b: tuple = (0.15, 0.25, 0.55)
    checker_period: float = 0.25
    light_dir: np.ndarray = field(default_factory=lambda: np.array([0.3, 0.2, 0.93]))
    ambient: float = 0.3

    def __post_init__(self):
        self.light_dir = np.asarray(self.light_dir, dtype=np.float64)
        self.light_dir = self.light_dir / np.linalg.norm(self.light_dir)
        if not 0.0 <= self.ambient <= 1.0:
            raise ConfigError("ambient must lie in [0, 1]")
        if self.albedo not in ("constant", "checker"):
            raise ConfigError(f"unknown albedo model {self.albedo!r}")

    def albedo_at(self, X):
        X = np.atleast_2d(X)
        if self.albedo == "constant":
            return np.broadcast_to(np.asarray(self.albedo_rgb), (len(X), 3)).copy()
        parity = np.floor(X / self.checker_period).sum(axis=1).astype(np.int64) % 2
        out = np.where(parity[:, None] == 0,
                       np.asarray(self.albedo_rgb)[None],
                       np.asarray(self.albedo_rgb_b)[None])
        return out.astype(np.float64)

    def shade(self, X, N):
        lam = np.maximum(np.einsum('ij,j->i', np.atleast_2d(N), self.light_dir), 0.0)
        fac = self.ambient + (1.0 - self.ambient) * lam
        return np.clip(self.albedo_at(X) * fac[:, None], 0.0, 1.0)


def sample_scene(scene: AnalyticScene, n: int, degradation: DegradationSpec,
                 seed: int):
    """Oriented surface samples, degraded per spec.

    The hole cut uses the exact normals; jitter and normal noise apply
    afterwards. Raises if the hole removes every sample.
    """
    from .pointcloud import OrientedPointCloud

    if n < 1:
        raise ConfigError("need at least one sample")
    rng = np.random.default_rng(seed)
    pts, nrm = scene.shape.sample_surface(n, rng)
    if degradation.hole_axis is not None and degradation.hole_half_angle_deg > 0:
        cos_t = np.cos(np.radians(degradation.hole_half_angle_deg))
        keep = nrm @ degradation.hole_axis <= cos_t
        pts, nrm = pts[keep], nrm[keep]
        if len(pts) == 0:
            raise DataError("hole degradation removed every sample")
    if degradation.jitter_sigma > 0:
        pts = pts + rng.normal(0.0, degradation.jitter_sigma, pts.shape)
    if degradation.normal_noise_deg > 0:
        nrm = _rotate_normals(nrm, degradation.normal_noise_deg, rng)
    return OrientedPointCloud(pts, nrm)


def _rotate_normals(nrm, sigma_deg, rng):
    """Rotate each normal by a gaussian angle about a random orthogonal axis."""
    n = len(nrm)
    ang = rng.normal(0.0, np.radians(sigma_deg), n)
    raw = rng.normal(size=(n, 3))
    axis = raw - nrm * np.einsum('ij,ij->i', raw, nrm)[:, None]
    axis /= np.maximum(np.linalg.norm(axis, axis=1, keepdims=True), 1e-300)
    c, s = np.cos(ang)[:, None], np.sin(ang)[:, None]
    out = nrm * c + np.cross(axis, nrm) * s
    return out / np.linalg.norm(out, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# cameras and rendering

def orbit_cameras(n_views, radius, elevation_deg, look_at=(0.0, 0.0, 0.0),
                  fx=80.0, fy=80.0, width=64, height=64):
    """Cameras equally spaced in azimuth at fixed elevation, all aimed at
    ``look_at`` (which projects to the principal point)."""
    if n_views < 1:
        raise ConfigError("need at least one view")
    look_at = np.asarray(look_at, dtype=np.float64)
    el = np.radians(elevation_deg)
    if abs(abs(el) - np.pi / 2) < 1e-9:
        raise ConfigError("degenerate top-down elevation")
    cams = []
    up = np.array([0.0, 0.0, 1.0])
    for i in range(n_views):
        az = 2 * np.pi * i / n_views
        center = look_at + radius * np.array(
            [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        z = look_at - center
        z /= np.linalg.norm(z)
        x = np.cross(z, up)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z], axis=1)
        cams.append(Camera(name=f"view_{i:02d}", width=width, height=height,
                           fx=fx, fy=fy, cx=width / 2.0, cy=height / 2.0,
                           rotation=R, translation=center))
    return cams


def render_views(scene: AnalyticScene, cameras, trace_cfg: TraceConfig | None = None):
    """Reference images and validity masks by exact sphere tracing.

    Returns (images [H, W, 3] in [0,1], masks [H, W] bool) per camera;
    background pixels are black and masked invalid.
    """
    if trace_cfg is None:
        trace_cfg = TraceConfig(hit_tol=1e-7 * TraceConfig().t_max,
                                max_steps=256)
    images, masks = [], []
    for cam in cameras:
        uu, vv = np.meshgrid(np.arange(cam.width) + 0.5,
                             np.arange(cam.height) + 0.5, indexing="xy")
        uv = np.stack([uu.ravel(), vv.ravel()], axis=1)
        origins, dirs = pixel_rays(cam, uv)
        res = sphere_trace(scene.shape, origins, dirs, trace_cfg)
        img = np.zeros((cam.height * cam.width, 3))
        hit = res.hit
        if np.any(hit):
            pts = res.points[hit]
            nrm = scene.shape.gradients(pts)
            nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
            img[hit] = scene.shade(pts, nrm)
        images.append(img.reshape(cam.height, cam.width, 3))
        masks.append(hit.reshape(cam.height, cam.width))
    return images, masks


# ---------------------------------------------------------------------------
# image files

def write_ppm(path, image):
    """Binary PPM (P6, maxval 255); linear values rounded to 8 bit."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.rint(img * 255.0).astype(np.uint8)
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    magic, rest = data.split(None, 1)
    if magic != b"P6":
        raise DataError(f"{path}: not a binary PPM")
    fields = []
    pos = len(data) - len(rest)
    while len(fields) < 3:
        tok = b""
        while data[pos:pos + 1].isspace():
            pos += 1
        while pos < len(data) and not data[pos:pos + 1].isspace():
            tok += data[pos:pos + 1]
            pos += 1
        fields.append(int(tok))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    img = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return img.reshape(h, w, 3).astype(np.float64) / maxval


def write_pgm(path, mask):
    m = np.asarray(mask)
    data = np.where(m, 255, 0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    magic, rest = data.split(None, 1)
    if magic != b"P5":
        raise DataError(f"{path}: not a binary PGM")
    fields = []
    pos = len(data) - len(rest)
    while len(fields) < 3:
        tok = b""
        while data[pos:pos + 1].isspace():
            pos += 1
        while pos < len(data) and not data[pos:pos + 1].isspace():
            tok += data[pos:pos + 1]
            pos += 1
        fields.append(int(tok))
    pos += 1
    w, h, _ = fields
    img = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return img.reshape(h, w) > 127
