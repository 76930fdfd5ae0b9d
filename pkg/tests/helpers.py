"""Independent oracles used across the test suite.

Everything here is deliberately naive (scalar loops, brute force,
finite differences) and shares no code with the package internals.
"""

import numpy as np


def naive_encoding(x, octaves):
    out = [x[0], x[1], x[2]]
    for k in range(octaves):
        f = 2.0 ** k
        for j in range(3):
            out.append(np.sin(f * x[j]))
        for j in range(3):
            out.append(np.cos(f * x[j]))
    return np.array(out)


def naive_softplus(z, beta):
    return np.logaddexp(0.0, beta * z) / beta


def naive_forward(params, arch, x_enc):
    """Loop-based re-implementation of the network forward pass."""
    a = np.asarray(x_enc, dtype=np.float64)
    e = a.copy()
    for l in range(1, arch.n_hidden + 1):
        W = params.segment(f"w{l}")
        b = params.segment(f"b{l}")
        u = np.concatenate([a, e]) if l in arch.skip_layers else a
        z = np.array([np.dot(W[i], u) + b[i] for i in range(W.shape[0])])
        if arch.activation == "softplus":
            a = naive_softplus(z, arch.beta)
        else:
            a = np.maximum(z, 0.0)
    W = params.segment("w_out")
    b = params.segment("b_out")
    out = np.array([np.dot(W[i], a) + b[i] for i in range(W.shape[0])])
    if arch.final_activation == "sigmoid":
        out = 1.0 / (1.0 + np.exp(-out))
    return out


def fd_gradient(fn, x, h=1e-5):
    """Central finite differences of a scalar function of a 3-vector."""
    g = np.zeros(3)
    for i in range(3):
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        g[i] = (fn(xp) - fn(xm)) / (2 * h)
    return g


def fd_hessian_of_gradient(grad_fn, x, h=1e-5):
    """FD of an exact gradient function: independent Hessian oracle."""
    H = np.zeros((3, 3))
    for i in range(3):
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        H[:, i] = (grad_fn(xp) - grad_fn(xm)) / (2 * h)
    return 0.5 * (H + H.T)


def fd_param_gradient(loss_fn, theta, h=1e-6, indices=None):
    """FD over a flat parameter vector; optionally a subset of indices."""
    idx = range(theta.size) if indices is None else indices
    g = np.zeros(theta.size)
    for i in idx:
        tp = theta.copy(); tp[i] += h
        tm = theta.copy(); tm[i] -= h
        g[i] = (loss_fn(tp) - loss_fn(tm)) / (2 * h)
    return g


def rel_err(a, b, floor=1e-9):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b).max() / max(np.abs(b).max(), floor)


def brute_force_nn(queries, points):
    """Exact nearest neighbors by full pairwise distances."""
    d = np.linalg.norm(queries[:, None, :] - points[None, :, :], axis=2)
    idx = d.argmin(axis=1)
    return idx, d[np.arange(len(queries)), idx]


def sphere_sdf(x, r=1.0):
    return np.linalg.norm(np.atleast_2d(x), axis=1) - r


def mesh_euler_characteristic(vertices, triangles):
    """V - E + F with E counted as unique undirected edges."""
    tri = np.asarray(triangles)
    edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    n_edges = len(np.unique(edges, axis=0))
    return len(vertices) - n_edges + len(tri)


def mesh_area(vertices, triangles):
    v = np.asarray(vertices)
    t = np.asarray(triangles)
    a = v[t[:, 1]] - v[t[:, 0]]
    b = v[t[:, 2]] - v[t[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(a, b), axis=1).sum()
