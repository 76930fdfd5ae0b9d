"""Camera model, sphere tracing, and the differentiable surface intersection.

The tracer marches ``t <- t + clamp(f, -step_max, step_max)``; clamping keeps
early-training fields (not yet valid distance fields) from overshooting.
Misses (t exceeded) and non-convergence (step budget exhausted) are distinct
reportable outcomes, not faults, and non-converged rays are treated as
misses by the render path.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, PreconditionError
from .mesher import Box, UNIT_BOX

STATUS_HIT = 0
STATUS_MISS = 1
STATUS_MAXSTEP = 2

TANGENT_FLOOR = 1e-4


@dataclass
class Camera:
    name: str
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray      # 3x3, world-from-camera
    translation: np.ndarray   # camera center in world coordinates

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise DataError(f"camera {self.name}: focal lengths must be positive")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > 1e-8:
            raise DataError(f"camera {self.name}: rotation not orthonormal "
                            f"(deviation {err:.2e})")

    @property
    def center(self) -> np.ndarray:
        return self.translation

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[:, 2]

    def normalized(self, scale: float, center) -> "Camera":
        """The same view of a similarity-transformed world."""
        t = (self.translation - np.asarray(center)) * scale
        return replace(self, translation=t)


def pixel_rays(camera: Camera, uv) -> tuple[np.ndarray, np.ndarray]:
    """World-space rays through continuous pixel coordinates [N, 2]."""
    uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
    d_cam = np.stack([(uv[:, 0] - camera.cx) / camera.fx,
                      (uv[:, 1] - camera.cy) / camera.fy,
                      np.ones(len(uv))], axis=1)
    d_world = d_cam @ camera.rotation.T
    d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
    origins = np.broadcast_to(camera.center, d_world.shape).copy()
    return origins, d_world


def pixel_ray(camera: Camera, uv):
    if not (0 <= uv[0] <= camera.width and 0 <= uv[1] <= camera.height):
        raise PreconditionError(f"pixel {uv} outside image bounds")
    o, d = pixel_rays(camera, np.asarray(uv).reshape(1, 2))
    return o[0], d[0]


def project(camera: Camera, X) -> np.ndarray:
    """World points to continuous pixel coordinates."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    xc = (X - camera.center) @ camera.rotation
    uv = np.stack([camera.fx * xc[:, 0] / xc[:, 2] + camera.cx,
                   camera.fy * xc[:, 1] / xc[:, 2] + camera.cy], axis=1)
    return uv


# ---------------------------------------------------------------------------
# sphere tracing

@dataclass
class TraceConfig:
    t_min: float = 0.0
    t_max: float = 2.0 * UNIT_BOX.diagonal
    hit_tol: float = 5e-5 * UNIT_BOX.diagonal
    max_steps: int = 128
    step_max: float = 0.5 * UNIT_BOX.diagonal

    @classmethod
    def for_box(cls, box: Box, max_steps: int = 128) -> "TraceConfig":
        d = box.diagonal
        return cls(t_min=0.0, t_max=2.0 * d, hit_tol=5e-5 * d,
                   max_steps=max_steps, step_max=0.5 * d)


@dataclass
class TraceResult:
    points: np.ndarray      # [N, 3] final ray positions
    t: np.ndarray           # [N]
    f: np.ndarray           # [N] field value at the final position
    steps: np.ndarray       # [N]
    status: np.ndarray      # [N] STATUS_*

    @property
    def hit(self) -> np.ndarray:
        return self.status == STATUS_HIT


@dataclass
class SurfaceHit:
    point: np.ndarray
    sdf_value: float
    normal: np.ndarray
    steps: int
    converged: bool


def sphere_trace(field, origins, directions, cfg: TraceConfig) -> TraceResult:
    """March each ray against the field; vectorized over rays."""
    if cfg.t_min >= cfg.t_max or cfg.hit_tol <= 0:
        raise PreconditionError("invalid trace configuration")
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    n = len(origins)
    t = np.full(n, cfg.t_min)
    f = np.empty(n)
    steps = np.zeros(n, dtype=np.int32)
    status = np.full(n, STATUS_MAXSTEP, dtype=np.uint8)
    active = np.arange(n)
    pts = origins + t[:, None] * directions
    f[active] = field.values(pts)
    final_pts = pts.copy()
    for it in range(cfg.max_steps):
        fa = f[active]
        converged = np.abs(fa) <= cfg.hit_tol
        status[active[converged]] = STATUS_HIT
        active = active[~converged]
        if active.size == 0:
            break
        step = np.clip(f[active], -cfg.step_max, cfg.step_max)
        t[active] += step
        overshot = t[active] > cfg.t_max
        status[active[overshot]] = STATUS_MISS
        # final position of missed rays is wherever they stopped
        missed = active[overshot]
        final_pts[missed] = origins[missed] + t[missed, None] * directions[missed]
        active = active[~overshot]
        if active.size == 0:
            break
        new_pts = origins[active] + t[active, None] * directions[active]
        final_pts[active] = new_pts
        f[active] = field.values(new_pts)
        steps[active] = it + 1
    return TraceResult(points=final_pts, t=t, f=f, steps=steps, status=status)


def trace_pixel(field, camera: Camera, uv, cfg: TraceConfig) -> SurfaceHit | None:
    """Single-ray convenience wrapper; None signals a miss."""
    o, d = pixel_ray(camera, uv)
    res = sphere_trace(field, o.reshape(1, 3), d.reshape(1, 3), cfg)
    if res.status[0] != STATUS_HIT:
        return None
    g = field.gradients(res.points[:1])[0]
    nrm = g / max(np.linalg.norm(g), 1e-300)
    return SurfaceHit(point=res.points[0], sdf_value=float(res.f[0]),
                      normal=nrm, steps=int(res.steps[0]), converged=True)


# ---------------------------------------------------------------------------
# differentiable intersection

def differentiable_intersection(x0, v, f_frozen, grad_frozen, field,
                                grad_scale: float = 1.0) -> np.ndarray:
    """First-order reparameterization of a traced hit point.

    ``x(params) = x0 - scale * v * (f(x0) - f_frozen) / (v . grad_frozen)``
    where the frozen quantities are constants of the trace; the only
    parameter-sensitive term is the fresh evaluation ``f(x0)``. Rays nearly
    tangential to the frozen gradient are rejected.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    denom = float(np.dot(v, np.asarray(grad_frozen, dtype=np.float64)))
    if abs(denom) < TANGENT_FLOOR:
        raise PreconditionError("ray tangential to the frozen surface gradient")
    f_now = float(field.values(x0.reshape(1, 3))[0])
    return x0 - grad_scale * v * (f_now - float(f_frozen)) / denom


def differentiable_intersections(X0, V, f_frozen, grad_frozen, f_now,
                                 grad_scale: float = 1.0):
    """Batched form on precomputed fresh values; returns (points, valid)."""
    denom = np.einsum('ij,ij->i', V, grad_frozen)
    valid = np.abs(denom) >= TANGENT_FLOOR
    shift = np.zeros_like(denom)
    shift[valid] = (f_now[valid] - f_frozen[valid]) / denom[valid]
    return X0 - grad_scale * shift[:, None] * V, valid


# ---------------------------------------------------------------------------
# camera file format (grammar documented in the README)

def write_cameras(path, cameras):
    with open(path, "w") as fh:
        fh.write("# sdfforge cameras v1\n")
        for c in cameras:
            fh.write(f"camera {c.name}\n")
            fh.write(f"size {c.width} {c.height}\n")
            fh.write(f"intrinsics {float(c.fx)!r} {float(c.fy)!r} "
                     f"{float(c.cx)!r} {float(c.cy)!r}\n")
            fh.write("rotation " + " ".join(
                repr(float(v)) for v in c.rotation.reshape(9)) + "\n")
            fh.write("translation " + " ".join(
                repr(float(v)) for v in c.translation) + "\n")


def read_cameras(path):
    cameras = []
    current = {}

    def flush():
        if not current:
            return
        missing = {"name", "size", "intrinsics", "rotation", "translation"} \
            - set(current)
        if missing:
            raise DataError(f"{path}: camera {current.get('name', '?')} "
                            f"missing {sorted(missing)}")
        w, h = current["size"]
        fx, fy, cx, cy = current["intrinsics"]
        cameras.append(Camera(
            name=current["name"], width=int(w), height=int(h),
            fx=fx, fy=fy, cx=cx, cy=cy,
            rotation=np.array(current["rotation"]).reshape(3, 3),
            translation=np.array(current["translation"])))
        current.clear()

    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            key, rest = parts[0], parts[1:]
            if key == "camera":
                flush()
                current["name"] = rest[0] if rest else ""
            elif key == "size":
                current["size"] = [int(v) for v in rest]
            elif key in ("intrinsics", "rotation", "translation"):
                current[key] = [float(v) for v in rest]
            else:
                raise DataError(f"{path}: unknown camera-file key {key!r}")
    flush()
    if not cameras:
        raise DataError(f"{path}: no cameras")
    return cameras
