"""Oriented point cloud ingestion, indexing, resampling and boundary points.

Nearest-neighbor queries are exact (scipy kd-tree); the test suite verifies
them against brute force. Distance supervision away from the surface comes
only from boundary points with determinable sign, never from free-space
nearest-neighbor distances.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._kernels import greedy_thin
from .errors import DataError, DegenerateNeighborhoodError, PreconditionError


@dataclass
class OrientedPointCloud:
    positions: np.ndarray               # [N, 3]
    normals: np.ndarray | None = None   # [N, 3] unit
    _tree: cKDTree | None = field(default=None, repr=False)
    _density: float | None = field(default=None, repr=False)
    _thinned_at: float | None = field(default=None, repr=False)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise DataError("positions must be [N, 3]")
        if not np.all(np.isfinite(self.positions)):
            raise DataError("non-finite point positions")
        if self.normals is not None:
            self.normals = np.ascontiguousarray(self.normals, dtype=np.float64)
            if self.normals.shape != self.positions.shape:
                raise DataError("normals shape mismatch")
            norms = np.linalg.norm(self.normals, axis=1)
            if self.normals.size and np.abs(norms - 1.0).max() > 1e-6:
                raise DataError("normals must be unit length")

    def __len__(self):
        return len(self.positions)

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.positions)
        return self._tree

    @property
    def density(self) -> float:
        """Median nearest-neighbor spacing."""
        if self._density is None:
            if len(self) < 2:
                raise DataError("density undefined for < 2 points")
            d, _ = self.tree.query(self.positions, k=2, workers=1)
            self._density = float(np.median(d[:, 1]))
        return self._density

    def nearest(self, queries, k=1):
        d, idx = self.tree.query(np.atleast_2d(queries), k=k, workers=1)
        return d, idx

    def bounding_box(self):
        return self.positions.min(axis=0), self.positions.max(axis=0)


@dataclass
class BoundaryPoint:
    position: np.ndarray
    target_distance: float

    def __post_init__(self):
        if self.target_distance < 0:
            raise DataError("boundary target distance must be >= 0")


# ---------------------------------------------------------------------------
# normal estimation and orientation

def estimate_normals(positions, k: int = 16) -> np.ndarray:
    """Smallest-eigenvector normals from k-NN covariance, arbitrary sign."""
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    n = len(positions)
    if k < 3:
        raise PreconditionError("normal estimation needs k >= 3")
    if n < k:
        raise PreconditionError(f"need at least k={k} points, got {n}")
    tree = cKDTree(positions)
    _, idx = tree.query(positions, k=k, workers=1)
    nbrs = positions[idx]                      # [N, k, 3]
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum('nki,nkj->nij', centered, centered) / k
    evals, evecs = np.linalg.eigh(cov)
    scale = np.maximum(evals[:, 2], 1e-300)
    if np.any(evals[:, 1] <= 1e-12 * scale) or np.any(evals[:, 2] <= 0):
        raise DegenerateNeighborhoodError(
            "point neighborhood is rank-deficient (coincident or collinear)")
    normals = evecs[:, :, 0]
    return normals / np.linalg.norm(normals, axis=1, keepdims=True)


def orient_normals(positions, normals, camera_centers, assignment=None):
    """Flip normals toward their assigned camera.

    ``assignment`` maps each point to a camera index; defaults to the
    nearest camera. Returns (oriented normals, count of points whose normal
    was exactly perpendicular to the view direction and kept its sign).
    """
    positions = np.asarray(positions, dtype=np.float64)
    normals = np.array(normals, dtype=np.float64)
    centers = np.atleast_2d(np.asarray(camera_centers, dtype=np.float64))
    if len(centers) == 0:
        raise PreconditionError("normal orientation needs at least one camera")
    if assignment is None:
        d = np.linalg.norm(positions[:, None, :] - centers[None], axis=2)
        assignment = d.argmin(axis=1)
    to_cam = centers[assignment] - positions
    dots = np.einsum('ij,ij->i', normals, to_cam)
    normals[dots < 0] *= -1.0
    undecided = int((dots == 0.0).sum())
    return normals, undecided


def downsample_uniform(cloud: OrientedPointCloud) -> OrientedPointCloud:
    """Thin to the 90th percentile of nearest-neighbor spacing.

    One point of every pair closer than the target spacing is discarded
    greedily in index order; the result is idempotent under re-application.
    """
    if len(cloud) < 2:
        raise PreconditionError("downsampling needs at least 2 points")
    if cloud._thinned_at is not None:
        # already thinned: re-deriving a target from the enforced spacings
        # would only inflate it, so keep the recorded one (idempotence)
        t = cloud._thinned_at
    else:
        d, _ = cloud.tree.query(cloud.positions, k=2, workers=1)
        spacings = d[:, 1][d[:, 1] > 0]
        t = float(np.percentile(spacings, 90)) if spacings.size else 0.0
    keep = greedy_thin(cloud.positions, t)
    out = OrientedPointCloud(
        cloud.positions[keep],
        cloud.normals[keep] if cloud.normals is not None else None)
    out._density = t
    out._thinned_at = t
    return out


# ---------------------------------------------------------------------------
# boundary points

def ray_box_entry(origin, direction, lo, hi):
    """Parameter of the first intersection of a ray with a box, or None."""
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    t0, t1 = -np.inf, np.inf
    for a in range(3):
        if abs(direction[a]) < 1e-300:
            if origin[a] < lo[a] or origin[a] > hi[a]:
                return None
            continue
        ta = (lo[a] - origin[a]) / direction[a]
        tb = (hi[a] - origin[a]) / direction[a]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    if t1 < t0 or t1 < 0:
        return None
    return max(t0, 0.0)


def make_boundary_points(camera_centers, view_directions, lo, hi):
    """Camera centers inside the box, else first view-line entry into it.

    Returns (positions [M, 3], number of skipped cameras).
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(hi <= lo):
        raise DataError("degenerate bounding box")
    points = []
    skipped = 0
    for c, v in zip(np.atleast_2d(camera_centers), np.atleast_2d(view_directions)):
        if np.all((c >= lo) & (c <= hi)):
            points.append(np.asarray(c, dtype=np.float64))
            continue
        t = ray_box_entry(c, v, lo, hi)
        if t is None:
            skipped += 1
            continue
        points.append(c + t * v)
    pts = np.array(points).reshape(-1, 3)
    return pts, skipped


def boundary_target_distance(x_b, cloud: OrientedPointCloud, k: int = 4,
                             max_angle_deg: float = 60.0) -> float:
    """Mean point-to-plane distance over angle-consistent nearest neighbors.

    Neighbors whose offset direction deviates from their normal by more than
    ``max_angle_deg`` are excluded; if all are excluded the single nearest
    neighbor's distance is used.
    """
    if len(cloud) == 0:
        raise PreconditionError("empty cloud")
    if cloud.normals is None:
        raise PreconditionError("boundary distances need oriented normals")
    k = min(k, len(cloud))
    x_b = np.asarray(x_b, dtype=np.float64)
    d, idx = cloud.tree.query(x_b, k=k, workers=1)
    idx = np.atleast_1d(idx)
    offsets = x_b[None, :] - cloud.positions[idx]
    nrm = cloud.normals[idx]
    plane_d = np.abs(np.einsum('ij,ij->i', offsets, nrm))
    lengths = np.linalg.norm(offsets, axis=1)
    cos_thresh = np.cos(np.radians(max_angle_deg))
    with np.errstate(invalid="ignore", divide="ignore"):
        cosang = np.abs(np.einsum('ij,ij->i', offsets, nrm)) / lengths
    keep = (lengths < 1e-12) | (cosang >= cos_thresh)
    if not np.any(keep):
        return float(plane_d[0])
    return float(plane_d[keep].mean())


def boundary_targets(points, cloud, k=4, max_angle_deg=60.0):
    return np.array([
        boundary_target_distance(p, cloud, k=k, max_angle_deg=max_angle_deg)
        for p in np.atleast_2d(points)])


# ---------------------------------------------------------------------------
# PLY I/O

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def read_ply(path) -> OrientedPointCloud:
    """ASCII or binary little-endian point PLY; unknown properties skipped."""
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n")
    if data[:nl].strip() != b"ply":
        raise DataError(f"{path}: not a PLY file")
    end = data.find(b"end_header\n")
    if end < 0:
        raise DataError(f"{path}: missing end_header")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]

    fmt = None
    n_vertex = 0
    props = []               # (name, dtype) of the vertex element
    in_vertex = False
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n_vertex = int(parts[2])
            elif props:
                break  # vertex element fully described; later elements ignored
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise DataError(f"{path}: list property in vertex element")
            if parts[1] not in _PLY_TYPES:
                raise DataError(f"{path}: unknown property type {parts[1]}")
            props.append((parts[2], _PLY_TYPES[parts[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise DataError(f"{path}: unsupported format {fmt}")
    names = [p[0] for p in props]
    for req in ("x", "y", "z"):
        if req not in names:
            raise DataError(f"{path}: vertex element lacks property {req}")
    known = {"x", "y", "z", "nx", "ny", "nz"}
    unknown = [n for n in names if n not in known]
    if unknown:
        warnings.warn(f"{path}: skipping unknown PLY properties {unknown}")

    if fmt == "ascii":
        text = body.decode("ascii").split()
        ncol = len(props)
        vals = np.array(text[:n_vertex * ncol], dtype=np.float64)
        table = vals.reshape(n_vertex, ncol)
        cols = {name: table[:, i] for i, (name, _) in enumerate(props)}
    else:
        dtype = np.dtype([(name, "<" + t) for name, t in props])
        table = np.frombuffer(body, dtype=dtype, count=n_vertex)
        cols = {name: table[name].astype(np.float64) for name, _ in props}

    pos = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
    normals = None
    if all(n in cols for n in ("nx", "ny", "nz")):
        normals = np.stack([cols["nx"], cols["ny"], cols["nz"]], axis=1)
        lens = np.linalg.norm(normals, axis=1)
        good = lens > 1e-12
        normals[good] /= lens[good, None]
        normals[~good] = np.array([0.0, 0.0, 1.0])
    return OrientedPointCloud(pos, normals)


def write_ply(path, cloud: OrientedPointCloud, binary=True):
    has_n = cloud.normals is not None
    lines = ["ply"]
    lines.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    lines.append(f"element vertex {len(cloud)}")
    lines += ["property double x", "property double y", "property double z"]
    if has_n:
        lines += ["property double nx", "property double ny", "property double nz"]
    lines.append("end_header")
    header = "\n".join(lines) + "\n"
    table = cloud.positions if not has_n else np.concatenate(
        [cloud.positions, cloud.normals], axis=1)
    if binary:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(np.ascontiguousarray(table, dtype="<f8").tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(header)
            for row in table:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def write_boundary_file(path, positions, targets):
    with open(path, "w") as fh:
        fh.write("# sdfforge boundary v1\n")
        fh.write("# x y z target_distance\n")
        for p, t in zip(positions, targets):
            fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r} "
                     f"{float(t)!r}\n")


def read_boundary_file(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = [float(v) for v in line.split()]
            if len(vals) != 4:
                raise DataError(f"{path}: malformed boundary row")
            rows.append(vals)
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return arr[:, :3], arr[:, 3]
