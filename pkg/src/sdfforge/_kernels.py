"""Hot loop kernels with a numba fast path and a numpy fallback.

The backend is chosen per call: set ``SDFFORGE_NUMBA=0`` in the
environment to force the pure numpy/scipy path. Both paths produce
identical outputs (same scan order, same arithmetic), which the test
suite and ``benchmarks/bench_kernels.py`` both rely on.
"""

import os

import numpy as np

from ._mc_tables import EDGE_CANONICAL, N_TRI, TRI_TABLE

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def use_numba() -> bool:
    flag = os.environ.get("SDFFORGE_NUMBA", "1").strip().lower()
    return HAVE_NUMBA and flag not in ("0", "false", "off", "no")


# ---------------------------------------------------------------------------
# marching cubes cell stream
#
# Emits, for every cell in C order and every triangle-table slot in row
# order, the global lattice-edge id of each triangle corner:
#     edge_id = ((i * ny + j) * nz + k) * 3 + axis
# Interpolation and welding are a shared numpy post-pass in the mesher.

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _mc_stream_jit(vals, iso, i0, ny, nz, tri_table, n_tri, canon):
        nx, nyv, m = vals.shape
        total = 0
        for i in range(nx - 1):
            for j in range(nyv - 1):
                for k in range(m - 1):
                    ci = 0
                    if vals[i, j, k] < iso:
                        ci |= 1
                    if vals[i + 1, j, k] < iso:
                        ci |= 2
                    if vals[i + 1, j + 1, k] < iso:
                        ci |= 4
                    if vals[i, j + 1, k] < iso:
                        ci |= 8
                    if vals[i, j, k + 1] < iso:
                        ci |= 16
                    if vals[i + 1, j, k + 1] < iso:
                        ci |= 32
                    if vals[i + 1, j + 1, k + 1] < iso:
                        ci |= 64
                    if vals[i, j + 1, k + 1] < iso:
                        ci |= 128
                    total += n_tri[ci] * 3
        out = np.empty(total, np.int64)
        pos = 0
        for i in range(nx - 1):
            for j in range(nyv - 1):
                for k in range(m - 1):
                    ci = 0
                    if vals[i, j, k] < iso:
                        ci |= 1
                    if vals[i + 1, j, k] < iso:
                        ci |= 2
                    if vals[i + 1, j + 1, k] < iso:
                        ci |= 4
                    if vals[i, j + 1, k] < iso:
                        ci |= 8
                    if vals[i, j, k + 1] < iso:
                        ci |= 16
                    if vals[i + 1, j, k + 1] < iso:
                        ci |= 32
                    if vals[i + 1, j + 1, k + 1] < iso:
                        ci |= 64
                    if vals[i, j + 1, k + 1] < iso:
                        ci |= 128
                    nvals = n_tri[ci] * 3
                    for s in range(nvals):
                        e = tri_table[ci, s]
                        out[pos] = ((np.int64(i0 + i + canon[e, 0]) * ny
                                     + (j + canon[e, 1])) * nz
                                    + (k + canon[e, 2])) * 3 + canon[e, 3]
                        pos += 1
        return out


def _mc_stream_numpy(vals, iso, i0, ny, nz):
    nx, nyv, m = vals.shape
    inside = vals < iso
    ci = (inside[:-1, :-1, :-1].astype(np.int32)
          | (inside[1:, :-1, :-1] << 1)
          | (inside[1:, 1:, :-1] << 2)
          | (inside[:-1, 1:, :-1] << 3)
          | (inside[:-1, :-1, 1:] << 4)
          | (inside[1:, :-1, 1:] << 5)
          | (inside[1:, 1:, 1:] << 6)
          | (inside[:-1, 1:, 1:] << 7))
    ci_flat = ci.reshape(-1)
    active = np.nonzero(N_TRI[ci_flat] > 0)[0]
    if active.size == 0:
        return np.empty(0, np.int64)
    rows = TRI_TABLE[ci_flat[active]]            # [na, 16]
    mask = rows >= 0
    local_e = rows[mask]                          # C order: cell-major, slot order
    cell_rep = np.repeat(active, mask.sum(axis=1))
    c1 = (nyv - 1) * (m - 1)
    i = cell_rep // c1
    rem = cell_rep - i * c1
    j = rem // (m - 1)
    k = rem - j * (m - 1)
    canon = EDGE_CANONICAL[local_e]
    return (((i0 + i + canon[:, 0]).astype(np.int64) * ny + (j + canon[:, 1]))
            * nz + (k + canon[:, 2])) * 3 + canon[:, 3]


def mc_cell_stream(vals, iso, i0, ny, nz):
    """Triangle-corner edge ids for one value slab (or the whole grid).

    ``vals`` holds lattice layers ``i0 .. i0 + vals.shape[0] - 1`` along the
    first axis of an (nx, ny, nz) lattice; slabbing along the C-order major
    axis keeps slab streams in exact whole-grid emission order.
    """
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    if use_numba():
        return _mc_stream_jit(vals, iso, i0, ny, nz, TRI_TABLE, N_TRI,
                              EDGE_CANONICAL)
    return _mc_stream_numpy(vals, iso, i0, ny, nz)


# ---------------------------------------------------------------------------
# greedy pair-discard thinning
#
# Scans points in index order; a point is kept iff no previously kept point
# lies strictly closer than ``t``. Both backends use the identical predicate
# so the keep masks match exactly.

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _thin_jit(pts, t):
        n = pts.shape[0]
        keep = np.zeros(n, np.bool_)
        head = {}
        nxt = np.full(n, -1, np.int64)
        inv = 1.0 / t
        t2 = t * t
        for idx in range(n):
            cx = np.int64(np.floor(pts[idx, 0] * inv))
            cy = np.int64(np.floor(pts[idx, 1] * inv))
            cz = np.int64(np.floor(pts[idx, 2] * inv))
            ok = True
            for dx in range(-1, 2):
                for dy in range(-1, 2):
                    for dz in range(-1, 2):
                        key = ((cx + dx) * np.int64(73856093)
                               ^ (cy + dy) * np.int64(19349663)
                               ^ (cz + dz) * np.int64(83492791))
                        if key in head:
                            p = head[key]
                            while p >= 0:
                                ddx = pts[idx, 0] - pts[p, 0]
                                ddy = pts[idx, 1] - pts[p, 1]
                                ddz = pts[idx, 2] - pts[p, 2]
                                d2 = ddx * ddx + ddy * ddy + ddz * ddz
                                if d2 < t2 or d2 == 0.0:
                                    ok = False
                                    break
                                p = nxt[p]
                        if not ok:
                            break
                    if not ok:
                        break
                if not ok:
                    break
            if ok:
                keep[idx] = True
                key = (cx * np.int64(73856093) ^ cy * np.int64(19349663)
                       ^ cz * np.int64(83492791))
                if key in head:
                    nxt[idx] = head[key]
                head[key] = idx
        return keep


def _thin_numpy(pts, t):
    from scipy.spatial import cKDTree

    n = pts.shape[0]
    keep = np.zeros(n, dtype=bool)
    tree = cKDTree(pts)
    # inclusive radius; exact strict-< check below matches the jit predicate
    neighbor_lists = tree.query_ball_point(pts, t, workers=1)
    t2 = t * t
    for idx in range(n):
        ok = True
        for p in neighbor_lists[idx]:
            if p >= idx or not keep[p]:
                continue
            ddx = pts[idx, 0] - pts[p, 0]
            ddy = pts[idx, 1] - pts[p, 1]
            ddz = pts[idx, 2] - pts[p, 2]
            d2 = ddx * ddx + ddy * ddy + ddz * ddz
            if d2 < t2 or d2 == 0.0:
                ok = False
                break
        keep[idx] = ok
    return keep


def greedy_thin(points, t):
    """Keep mask for greedy minimum-spacing thinning at threshold ``t``.

    A point is kept iff no previously kept point lies strictly closer than
    ``t``; exact duplicates of a kept point are always discarded.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    t = max(float(t), 1e-300)
    if use_numba():
        return np.asarray(_thin_jit(pts, t))
    return _thin_numpy(pts, t)
