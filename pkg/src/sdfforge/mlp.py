"""MLP scalar/vector fields with exact input derivatives and parameter gradients.

The network family is fixed: positional-encoded input, dense hidden layers
with optional skip concatenation of the encoded input, and a final linear
head producing a primary output (distance or color) plus an optional
location descriptor. First and second derivatives with respect to the raw
3-vector input are propagated forward analytically alongside the
activations; parameter gradients of losses built from the value, the
gradient, and the Hessian are obtained by a reverse sweep through those
same recurrences (a third-order path overall).

All batched arrays are float64. Tangent blocks are kept in a flat
``[batch * n_dirs, width]`` layout so every contraction is a plain 2-D GEMM.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import (
    ConfigError,
    NumericFaultError,
    PreconditionError,
    UnsupportedActivationError,
)

ACT_SOFTPLUS = "softplus"
ACT_RELU = "relu"
FINAL_NONE = "none"
FINAL_SIGMOID = "sigmoid"

_CKPT_MAGIC = b"SDFFORGE"
_CKPT_VERSION = 1
_ACT_IDS = {ACT_SOFTPLUS: 0, ACT_RELU: 1}
_FINAL_IDS = {FINAL_NONE: 0, FINAL_SIGMOID: 1}


def encoded_dim(octaves: int) -> int:
    return 3 + 6 * octaves


@dataclass(frozen=True)
class MlpArchitecture:
    """Static description of one network; the parameter layout derives from it.

    ``input_dim`` is the width of the assembled input vector (after any
    positional encoding and concatenation done by the owning field).
    ``skip_layers`` lists hidden layers that receive the assembled input
    concatenated onto the previous activation.
    """

    input_dim: int
    layer_widths: tuple[int, ...]
    skip_layers: frozenset[int] = frozenset()
    activation: str = ACT_SOFTPLUS
    beta: float = 100.0
    pe_octaves: int = 6
    out_width: int = 1
    descriptor_width: int = 0
    final_activation: str = FINAL_NONE

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError("input_dim must be >= 1")
        if not self.layer_widths or any(w < 1 for w in self.layer_widths):
            raise ConfigError("layer widths must all be >= 1")
        bad = set(self.skip_layers) - set(range(1, len(self.layer_widths)))
        if bad:
            raise ConfigError(f"skip layers out of range: {sorted(bad)}")
        if self.activation not in _ACT_IDS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.final_activation not in _FINAL_IDS:
            raise ConfigError(f"unknown final activation {self.final_activation!r}")
        if self.pe_octaves < 0 or self.out_width < 1 or self.descriptor_width < 0:
            raise ConfigError("pe_octaves/out_width/descriptor_width out of range")

    @property
    def n_hidden(self) -> int:
        return len(self.layer_widths)

    @property
    def out_total(self) -> int:
        return self.out_width + self.descriptor_width

    def layer_in_dim(self, layer: int) -> int:
        """Input width of hidden layer ``layer`` (1-based)."""
        prev = self.input_dim if layer == 1 else self.layer_widths[layer - 2]
        return prev + (self.input_dim if layer in self.skip_layers else 0)

    @property
    def smooth(self) -> bool:
        return self.activation == ACT_SOFTPLUS


def sdf_architecture(hidden=(512,) * 8, skips=(4,), octaves=6,
                     descriptor=256, beta=100.0) -> MlpArchitecture:
    """Distance field net: encoded location in, distance + descriptor out."""
    return MlpArchitecture(
        input_dim=encoded_dim(octaves),
        layer_widths=tuple(hidden),
        skip_layers=frozenset(skips),
        activation=ACT_SOFTPLUS,
        beta=beta,
        pe_octaves=octaves,
        out_width=1,
        descriptor_width=descriptor,
        final_activation=FINAL_NONE,
    )


def slf_architecture(hidden=(512,) * 4, octaves=4, descriptor=256,
                     activation=ACT_RELU, beta=100.0) -> MlpArchitecture:
    """Light field net: [location, normal, encoded view, descriptor] -> rgb."""
    return MlpArchitecture(
        input_dim=3 + 3 + encoded_dim(octaves) + descriptor,
        layer_widths=tuple(hidden),
        skip_layers=frozenset(),
        activation=activation,
        beta=beta,
        pe_octaves=octaves,
        out_width=3,
        descriptor_width=0,
        final_activation=FINAL_SIGMOID,
    )


# ---------------------------------------------------------------------------
# positional encoding

def positional_encoding(x, octaves: int):
    """Encode a 3-vector as [x, sin(2^k x), cos(2^k x)] for k < octaves."""
    x = np.asarray(x, dtype=np.float64)
    return encode_batch(x.reshape(1, 3), octaves)[0]


def encode_batch(X: np.ndarray, octaves: int) -> np.ndarray:
    B = X.shape[0]
    out = np.empty((B, encoded_dim(octaves)))
    out[:, :3] = X
    col = 3
    for k in range(octaves):
        f = float(2 ** k)
        out[:, col:col + 3] = np.sin(f * X)
        out[:, col + 3:col + 6] = np.cos(f * X)
        col += 6
    return out


def encode_batch_derivs(X: np.ndarray, octaves: int):
    """Encoding value plus first/second derivative tangents.

    Returns (E [B,ne], dE [B*3,ne], d2E [B*9,ne]) where dE[b*3+a, i] is
    dE_i/dx_a and d2E[b*9+3a+c, i] is d2E_i/(dx_a dx_c).
    """
    B = X.shape[0]
    ne = encoded_dim(octaves)
    E = np.empty((B, ne))
    dE = np.zeros((B, 3, ne))
    d2E = np.zeros((B, 9, ne))
    E[:, :3] = X
    for j in range(3):
        dE[:, j, j] = 1.0
    col = 3
    for k in range(octaves):
        f = float(2 ** k)
        s = np.sin(f * X)
        c = np.cos(f * X)
        E[:, col:col + 3] = s
        E[:, col + 3:col + 6] = c
        for j in range(3):
            dE[:, j, col + j] = f * c[:, j]
            dE[:, j, col + 3 + j] = -f * s[:, j]
            d2E[:, 4 * j, col + j] = -f * f * s[:, j]
            d2E[:, 4 * j, col + 3 + j] = -f * f * c[:, j]
        col += 6
    return E, dE.reshape(B * 3, ne), d2E.reshape(B * 9, ne)


# ---------------------------------------------------------------------------
# parameters

@dataclass
class ParamStore:
    """Flat parameter vector plus the named layout that addresses it."""

    values: np.ndarray
    layout: tuple  # of (name, offset, shape)

    def segment(self, name: str) -> np.ndarray:
        for seg_name, off, shape in self.layout:
            if seg_name == name:
                n = int(np.prod(shape))
                return self.values[off:off + n].reshape(shape)
        raise KeyError(name)

    def copy(self) -> "ParamStore":
        return ParamStore(self.values.copy(), self.layout)

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise NumericFaultError("non-finite network parameter")


def param_layout(arch: MlpArchitecture):
    """Ordered (name, offset, shape) segments; a pure function of the arch."""
    segs = []
    off = 0
    dims = []
    for l in range(1, arch.n_hidden + 1):
        dims.append((arch.layer_widths[l - 1], arch.layer_in_dim(l)))
    dims.append((arch.out_total, arch.layer_widths[-1]))
    for l, (n, m) in enumerate(dims, start=1):
        name = f"w{l}" if l <= arch.n_hidden else "w_out"
        segs.append((name, off, (n, m)))
        off += n * m
        name = f"b{l}" if l <= arch.n_hidden else "b_out"
        segs.append((name, off, (n,)))
        off += n
    return tuple(segs), off


def param_count(arch: MlpArchitecture) -> int:
    return param_layout(arch)[1]


def init_params(arch: MlpArchitecture, seed: int) -> ParamStore:
    """Fan-in scaled uniform weights (variance 2/fan_in), zero biases."""
    layout, total = param_layout(arch)
    rng = np.random.default_rng(seed)
    values = np.zeros(total)
    for name, off, shape in layout:
        if name.startswith("w"):
            fan_in = shape[1]
            bound = np.sqrt(6.0 / fan_in)
            n = int(np.prod(shape))
            values[off:off + n] = rng.uniform(-bound, bound, n)
    return ParamStore(values, layout)


def _unpack(params: ParamStore, arch: MlpArchitecture):
    ws, bs = [], []
    for name, off, shape in params.layout:
        n = int(np.prod(shape))
        arr = params.values[off:off + n].reshape(shape)
        (ws if name.startswith("w") else bs).append(arr)
    if len(ws) != arch.n_hidden + 1:
        raise ConfigError("parameter layout does not match architecture")
    return ws, bs


# ---------------------------------------------------------------------------
# activations

def _act_fns(arch: MlpArchitecture):
    if arch.activation == ACT_SOFTPLUS:
        beta = arch.beta

        def value(z):
            return np.logaddexp(0.0, beta * z) / beta

        def d1(z):
            return expit(beta * z)

        def d2(z):
            s = expit(beta * z)
            return beta * s * (1.0 - s)

        def d3(z):
            s = expit(beta * z)
            return beta * beta * s * (1.0 - s) * (1.0 - 2.0 * s)

        return value, d1, d2, d3

    def value(z):
        return np.maximum(z, 0.0)

    def d1(z):
        return (z > 0.0).astype(np.float64)

    zero = lambda z: np.zeros_like(z)
    return value, d1, zero, zero


# ---------------------------------------------------------------------------
# forward evaluation

@dataclass
class EvalRecord:
    """Cached forward pass: everything the reverse sweep and the derivative
    chains need. Holds references, not copies, of the parameter store."""

    arch: MlpArchitecture
    params: ParamStore
    U: np.ndarray                 # assembled input [B, input_dim]
    us: list                      # per-layer consumed inputs [B, m_l]
    zs: list                      # per-layer pre-activations [B, w_l]
    acts: list                    # per-layer activations [B, w_l]
    out: np.ndarray               # final linear output [B, out_total]
    dU: np.ndarray | None = None
    d2U: np.ndarray | None = None
    Jus: list | None = None       # tangent inputs per layer [B*3, m_l]
    Zps: list | None = None       # tangent pre-activations [B*3, w_l]
    Hus: list | None = None       # curvature inputs [B*9, m_l]
    Zpps: list | None = None      # curvature pre-activations [B*9, w_l]
    grad: np.ndarray | None = None    # scalar-head input gradient [B, 3]
    hess: np.ndarray | None = None    # scalar-head input Hessian [B, 3, 3]

    @property
    def batch(self) -> int:
        return self.U.shape[0]

    def replay(self) -> np.ndarray:
        """Re-run the forward pass from the cached input; bit-identical."""
        rec = forward(self.params, self.arch, self.U)
        return rec.out


def forward(params: ParamStore, arch: MlpArchitecture, U: np.ndarray,
            dU: np.ndarray | None = None, d2U: np.ndarray | None = None) -> EvalRecord:
    """Evaluate the network on assembled inputs, optionally carrying
    first/second input-derivative tangents through every layer.

    ``dU``/``d2U`` use the flat [B*3, input_dim] / [B*9, input_dim] layout.
    Derivative chains of the scalar head are filled into the record when
    tangents are supplied.
    """
    ws, bs = _unpack(params, arch)
    act, d1f, d2f, _ = _act_fns(arch)
    B = U.shape[0]
    want_g = dU is not None
    want_h = d2U is not None
    if want_h and not want_g:
        raise PreconditionError("second-order tangents require first-order ones")
    if want_h and not arch.smooth:
        raise UnsupportedActivationError(
            "second derivatives require a smooth activation")

    us, zs, acts = [], [], []
    Jus = [] if want_g else None
    Zps = [] if want_g else None
    Hus = [] if want_h else None
    Zpps = [] if want_h else None

    a, Ja, Ha = U, dU, d2U
    for l in range(1, arch.n_hidden + 1):
        W, b = ws[l - 1], bs[l - 1]
        if l in arch.skip_layers:
            u = np.concatenate([a, U], axis=1)
            Ju = np.concatenate([Ja, dU], axis=1) if want_g else None
            Hu = np.concatenate([Ha, d2U], axis=1) if want_h else None
        else:
            u, Ju, Hu = a, Ja, Ha
        z = u @ W.T + b
        us.append(u)
        zs.append(z)
        a = act(z)
        acts.append(a)
        if want_g:
            Zp = Ju @ W.T
            s1 = d1f(z)
            Ja = (Zp.reshape(B, 3, -1) * s1[:, None, :]).reshape(B * 3, -1)
            Jus.append(Ju)
            Zps.append(Zp)
        if want_h:
            Zpp = Hu @ W.T
            s2 = d2f(z)
            Zp3 = Zp.reshape(B, 3, -1)
            outer = (Zp3[:, :, None, :] * Zp3[:, None, :, :]).reshape(B * 9, -1)
            Ha = (outer.reshape(B, 9, -1) * s2[:, None, :]
                  + Zpp.reshape(B, 9, -1) * s1[:, None, :]).reshape(B * 9, -1)
            Hus.append(Hu)
            Zpps.append(Zpp)

    Wo, bo = ws[-1], bs[-1]
    out = a @ Wo.T + bo
    rec = EvalRecord(arch, params, U, us, zs, acts, out,
                     dU=dU, d2U=d2U, Jus=Jus, Zps=Zps, Hus=Hus, Zpps=Zpps)
    w0 = Wo[0]
    if want_g:
        rec.grad = (Ja @ w0).reshape(B, 3)
    if want_h:
        rec.hess = (Ha @ w0).reshape(B, 3, 3)
    # final hidden tangents are needed by the reverse sweep
    if want_g:
        Jus.append(Ja)
    if want_h:
        Hus.append(Ha)
    return rec


def backprop(record: EvalRecord, out_bar: np.ndarray | None = None,
             grad_bar: np.ndarray | None = None,
             hess_bar: np.ndarray | None = None,
             want_input_adjoint: bool = False):
    """Reverse sweep for parameter gradients.

    ``out_bar`` is the adjoint of the final linear output [B, out_total];
    ``grad_bar`` [B, 3] and ``hess_bar`` [B, 3, 3] are adjoints of the
    scalar head's input gradient and Hessian (which requires the record to
    carry the corresponding tangent chains). Returns a flat gradient
    aligned with the ParamStore, plus the adjoint of the assembled input
    when requested.
    """
    arch, params = record.arch, record.params
    ws, _ = _unpack(params, arch)
    _, d1f, d2f, d3f = _act_fns(arch)
    B = record.batch
    grads = np.zeros_like(params.values)
    layout = params.layout

    def gslot(idx):
        name, off, shape = layout[idx]
        n = int(np.prod(shape))
        return grads[off:off + n].reshape(shape)

    Wo = ws[-1]
    aH = record.acts[-1]
    input_bar_acc = None
    zbar = out_bar if out_bar is not None else np.zeros((B, arch.out_total))
    # output layer (identity activation)
    gW = gslot(2 * arch.n_hidden)
    gb = gslot(2 * arch.n_hidden + 1)
    gW += zbar.T @ aH
    gb += zbar.sum(axis=0)
    abar = zbar @ Wo
    Jbar = None
    Hbar = None
    if grad_bar is not None:
        if record.Zps is None:
            raise PreconditionError("record lacks gradient tangents")
        JH = record.Jus[-1]  # [B*3, wH]
        gW[0] += (grad_bar.reshape(B * 3)[:, None] * JH).sum(axis=0)
        Jbar = grad_bar.reshape(B * 3)[:, None] * Wo[0][None, :]
    if hess_bar is not None:
        if record.Zpps is None:
            raise PreconditionError("record lacks Hessian tangents")
        HH = record.Hus[-1]  # [B*9, wH]
        gW[0] += (hess_bar.reshape(B * 9)[:, None] * HH).sum(axis=0)
        Hbar = hess_bar.reshape(B * 9)[:, None] * Wo[0][None, :]

    for l in range(arch.n_hidden, 0, -1):
        W = ws[l - 1]
        u = record.us[l - 1]
        z = record.zs[l - 1]
        s1 = d1f(z)
        zb = abar * s1
        Zpbar = None
        Zppbar = None
        if Jbar is not None:
            Zp = record.Zps[l - 1]
            s2 = d2f(z)
            zb = zb + s2 * (Jbar.reshape(B, 3, -1) * Zp.reshape(B, 3, -1)).sum(axis=1)
            Zpbar = (Jbar.reshape(B, 3, -1) * s1[:, None, :]).reshape(B * 3, -1)
        if Hbar is not None:
            Zpp = record.Zpps[l - 1]
            s2 = d2f(z)
            s3 = d3f(z)
            Hb = Hbar.reshape(B, 3, 3, -1)
            Zp3 = record.Zps[l - 1].reshape(B, 3, -1)
            q = np.einsum('bacn,bcn->ban', Hb, Zp3)
            zb = zb + s3 * np.einsum('ban,ban->bn', q, Zp3)
            zb = zb + s2 * (Hbar.reshape(B, 9, -1) * Zpp.reshape(B, 9, -1)).sum(axis=1)
            sym = Hb + Hb.transpose(0, 2, 1, 3)
            extra = s2[:, None, :] * np.einsum('bcan,ban->bcn', sym, Zp3)
            if Zpbar is None:
                Zpbar = np.zeros((B * 3, z.shape[1]))
            Zpbar = Zpbar + extra.reshape(B * 3, -1)
            Zppbar = (Hbar.reshape(B, 9, -1) * s1[:, None, :]).reshape(B * 9, -1)

        gW = gslot(2 * (l - 1))
        gb = gslot(2 * (l - 1) + 1)
        gW += zb.T @ u
        gb += zb.sum(axis=0)
        ubar = zb @ W
        Jubar = Zpbar @ W if Zpbar is not None else None
        Hubar = Zppbar @ W if Zppbar is not None else None
        if Zpbar is not None:
            gW += Zpbar.T @ record.Jus[l - 1]
        if Zppbar is not None:
            gW += Zppbar.T @ record.Hus[l - 1]
        if l in arch.skip_layers:
            keep = u.shape[1] - arch.input_dim
            skip_bar = ubar[:, keep:]
            input_bar_acc = skip_bar if input_bar_acc is None \
                else input_bar_acc + skip_bar
            abar = ubar[:, :keep]
            Jbar = Jubar[:, :keep] if Jubar is not None else None
            Hbar = Hubar[:, :keep] if Hubar is not None else None
        else:
            abar, Jbar, Hbar = ubar, Jubar, Hubar

    if want_input_adjoint:
        input_bar = abar if input_bar_acc is None else abar + input_bar_acc
        return grads, input_bar
    return grads


# ---------------------------------------------------------------------------
# field wrappers

@dataclass
class SdfBatch:
    f: np.ndarray
    descriptor: np.ndarray | None = None
    grad: np.ndarray | None = None
    hess: np.ndarray | None = None
    record: EvalRecord | None = None


class SdfField:
    """Distance network bound to a parameter store.

    Exposes the generic field protocol (values / gradients / hessians)
    plus record-producing evaluation and reverse-mode parameter gradients.
    """

    def __init__(self, arch: MlpArchitecture, params: ParamStore):
        self.arch = arch
        self.params = params

    def evaluate(self, X, grad=False, hess=False) -> SdfBatch:
        self.params.check_finite()
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if hess and not self.arch.smooth:
            raise UnsupportedActivationError(
                "Hessian evaluation requires a smooth activation")
        if grad or hess:
            E, dE, d2E = encode_batch_derivs(X, self.arch.pe_octaves)
            rec = forward(self.params, self.arch, E, dE, d2E if hess else None)
        else:
            E = encode_batch(X, self.arch.pe_octaves)
            rec = forward(self.params, self.arch, E)
        out = rec.out
        if not np.all(np.isfinite(out)):
            raise NumericFaultError("non-finite field evaluation")
        return SdfBatch(f=out[:, 0], descriptor=out[:, 1:],
                        grad=rec.grad, hess=rec.hess, record=rec)

    def values(self, X) -> np.ndarray:
        return self.evaluate(X).f

    def gradients(self, X) -> np.ndarray:
        return self.evaluate(X, grad=True).grad

    def hessians(self, X) -> np.ndarray:
        return self.evaluate(X, grad=True, hess=True).hess

    def backprop(self, record: EvalRecord, f_bar=None, desc_bar=None,
                 grad_bar=None, hess_bar=None) -> np.ndarray:
        B = record.batch
        out_bar = None
        if f_bar is not None or desc_bar is not None:
            out_bar = np.zeros((B, self.arch.out_total))
            if f_bar is not None:
                out_bar[:, 0] = f_bar
            if desc_bar is not None:
                out_bar[:, 1:] = desc_bar
        g = backprop(record, out_bar, grad_bar, hess_bar)
        if not np.all(np.isfinite(g)):
            raise NumericFaultError("non-finite parameter gradient")
        return g


class LightField:
    """Surface light field network: g(x, n, v, descriptor) -> rgb in [0,1]."""

    def __init__(self, arch: MlpArchitecture, params: ParamStore):
        self.arch = arch
        self.params = params

    def assemble(self, X, N, V, DESC) -> np.ndarray:
        Ev = encode_batch(np.atleast_2d(V), self.arch.pe_octaves)
        parts = [np.atleast_2d(X), np.atleast_2d(N), Ev]
        if DESC is not None and DESC.size:
            parts.append(np.atleast_2d(DESC))
        return np.concatenate(parts, axis=1)

    def colors(self, X, N, V, DESC, record=False):
        self.params.check_finite()
        U = self.assemble(X, N, V, DESC)
        rec = forward(self.params, self.arch, U)
        rgb = expit(rec.out) if self.arch.final_activation == FINAL_SIGMOID else rec.out
        if record:
            return rgb, rec
        return rgb

    def backprop(self, record: EvalRecord, rgb_bar, want_input_adjoint=False):
        if self.arch.final_activation == FINAL_SIGMOID:
            r = expit(record.out)
            out_bar = rgb_bar * r * (1.0 - r)
        else:
            out_bar = rgb_bar
        res = backprop(record, out_bar, want_input_adjoint=want_input_adjoint)
        if want_input_adjoint:
            g, ubar = res
            x_bar = ubar[:, :3]
            d = self.arch.input_dim - (6 + encoded_dim(self.arch.pe_octaves))
            desc_bar = ubar[:, self.arch.input_dim - d:] if d > 0 else None
            return g, x_bar, desc_bar
        return res


# ---------------------------------------------------------------------------
# single-point operations

def eval_sdf(params: ParamStore, arch: MlpArchitecture, x):
    """Distance, descriptor and the forward record for one query location."""
    field = SdfField(arch, params)
    batch = field.evaluate(np.asarray(x, dtype=np.float64).reshape(1, 3))
    return float(batch.f[0]), batch.descriptor[0], batch.record


def _ensure_tangents(record: EvalRecord, hess: bool):
    if record.Zps is not None and (not hess or record.Zpps is not None):
        return record
    X = record.U[:, :3]
    E, dE, d2E = encode_batch_derivs(X, record.arch.pe_octaves)
    return forward(record.params, record.arch, E, dE, d2E if hess else None)


def grad_sdf(record: EvalRecord) -> np.ndarray:
    """Exact gradient of the scalar head w.r.t. the raw input location."""
    rec = _ensure_tangents(record, hess=False)
    g = rec.grad.reshape(-1, 3)
    if not np.all(np.isfinite(g)):
        raise NumericFaultError("non-finite gradient")
    return g[0] if record.batch == 1 else g


def hessian_sdf(record: EvalRecord) -> np.ndarray:
    """Exact symmetric 3x3 Hessian of the scalar head."""
    if not record.arch.smooth:
        raise UnsupportedActivationError(
            "Hessian requested from a rectifier network")
    rec = _ensure_tangents(record, hess=True)
    h = rec.hess.reshape(-1, 3, 3)
    if not np.all(np.isfinite(h)):
        raise NumericFaultError("non-finite Hessian")
    return h[0] if record.batch == 1 else h


def eval_slf(params: ParamStore, arch: MlpArchitecture, x, n, v, descriptor):
    """RGB of one surface point; ``n`` and ``v`` must be unit length."""
    n = np.asarray(n, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if abs(np.linalg.norm(n) - 1.0) > 1e-6 or abs(np.linalg.norm(v) - 1.0) > 1e-6:
        raise PreconditionError("normal and view direction must be unit vectors")
    field = LightField(arch, params)
    desc = np.asarray(descriptor, dtype=np.float64).reshape(1, -1)
    rgb = field.colors(np.asarray(x, dtype=np.float64).reshape(1, 3),
                       n.reshape(1, 3), v.reshape(1, 3), desc)
    return rgb[0]


# ---------------------------------------------------------------------------
# checkpoint format

def save_checkpoint(path, params: ParamStore, arch: MlpArchitecture):
    """Write the portable network file: header, float32 blob, trailing CRC32."""
    head = bytearray()
    head += _CKPT_MAGIC
    head += struct.pack("<I", _CKPT_VERSION)
    head += struct.pack("<IIII", arch.input_dim, arch.pe_octaves,
                        arch.out_width, arch.descriptor_width)
    head += struct.pack("<Bf B", _ACT_IDS[arch.activation], arch.beta,
                        _FINAL_IDS[arch.final_activation])
    head += struct.pack("<I", arch.n_hidden)
    head += struct.pack(f"<{arch.n_hidden}I", *arch.layer_widths)
    skips = sorted(arch.skip_layers)
    head += struct.pack("<I", len(skips))
    if skips:
        head += struct.pack(f"<{len(skips)}I", *skips)
    head += struct.pack("<Q", params.values.size)
    blob = params.values.astype("<f4").tobytes()
    payload = bytes(head) + blob
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


def load_checkpoint(path):
    """Read a network file back; returns (ParamStore, MlpArchitecture)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:8] != _CKPT_MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file")
    crc_stored = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != crc_stored:
        raise ConfigError(f"{path}: checkpoint CRC mismatch")
    off = 8
    (version,) = struct.unpack_from("<I", data, off); off += 4
    if version != _CKPT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    input_dim, octaves, out_w, desc_w = struct.unpack_from("<IIII", data, off)
    off += 16
    act_id, beta, final_id = struct.unpack_from("<Bf B", data, off)
    off += struct.calcsize("<Bf B")
    (n_hidden,) = struct.unpack_from("<I", data, off); off += 4
    widths = struct.unpack_from(f"<{n_hidden}I", data, off); off += 4 * n_hidden
    (n_skips,) = struct.unpack_from("<I", data, off); off += 4
    skips = struct.unpack_from(f"<{n_skips}I", data, off) if n_skips else ()
    off += 4 * n_skips
    (count,) = struct.unpack_from("<Q", data, off); off += 8
    acts = {v: k for k, v in _ACT_IDS.items()}
    finals = {v: k for k, v in _FINAL_IDS.items()}
    arch = MlpArchitecture(
        input_dim=input_dim, layer_widths=tuple(int(w) for w in widths),
        skip_layers=frozenset(int(s) for s in skips),
        activation=acts[act_id], beta=float(beta), pe_octaves=int(octaves),
        out_width=int(out_w), descriptor_width=int(desc_w),
        final_activation=finals[final_id])
    layout, total = param_layout(arch)
    if total != count:
        raise ConfigError(f"{path}: parameter count mismatch")
    blob = np.frombuffer(data, dtype="<f4", count=count, offset=off)
    values = blob.astype(np.float64)
    return ParamStore(values, layout), arch
