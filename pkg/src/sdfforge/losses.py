"""Loss terms, their weighted total, and Monte Carlo area/volume estimators.

Value functions work on any field exposing the values/gradients/hessians
protocol (learned or analytic). ``total_loss_and_grads`` additionally
assembles exact parameter gradients for both networks, including the
second-order path through the Hessian penalty and the reparameterized
surface intersection of the render term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericFaultError
from .mesher import Box
from .tracer import (
    STATUS_HIT,
    TANGENT_FLOOR,
    TraceConfig,
    pixel_rays,
    sphere_trace,
)

GRAD_FLOOR = 1e-9          # vanishing-gradient guard in the data term
MODE_FROZEN = "frozen"
MODE_DIFFERENTIABLE = "differentiable"


@dataclass
class LossWeights:
    data: float = 1.0           # weight of the point term
    boundary: float = 1.0
    eikonal: float = 0.1
    hessian: float = 0.01
    minimal_surface: float = 0.01
    render: float = 1.0
    distance: float = 1.0       # inner weight on |f| within the data term
    normal: float = 1.0         # inner weight on the normal alignment term
    epsilon: float = 10.0       # regularized Dirac sharpness

    def __post_init__(self):
        vals = [self.data, self.boundary, self.eikonal, self.hessian,
                self.minimal_surface, self.render, self.distance, self.normal]
        if any(v < 0 for v in vals):
            raise ConfigError("loss weights must be non-negative")
        if self.epsilon <= 0:
            raise ConfigError("dirac epsilon must be positive")


@dataclass
class PixelBatch:
    cam_indices: np.ndarray     # [P]
    uv: np.ndarray              # [P, 2] continuous pixel coordinates
    rgb: np.ndarray             # [P, 3] ground-truth colors in [0, 1]

    def __len__(self):
        return len(self.uv)


@dataclass
class SampleBatch:
    data_points: np.ndarray
    data_normals: np.ndarray
    boundary_points: np.ndarray
    boundary_targets: np.ndarray
    uniform: np.ndarray
    pixels: PixelBatch | None = None


def _field_eval(field, X, grad=False, hess=False):
    if hasattr(field, "evaluate"):
        b = field.evaluate(X, grad=grad, hess=hess)
        return b.f, b.grad, b.hess
    f = field.values(X)
    g = field.gradients(X) if grad else None
    h = field.hessians(X) if hess else None
    return f, g, h


# ---------------------------------------------------------------------------
# individual terms (values)

def data_loss(field, points, normals, lambda_d=1.0, lambda_n=1.0):
    """Mean of lambda_d |f| + lambda_n (1 - n . grad f / |grad f|)."""
    f, g, _ = _field_eval(field, points, grad=True)
    return _data_term(f, g, np.atleast_2d(normals), lambda_d, lambda_n)[0]


def _data_term(f, g, normals, lambda_d, lambda_n):
    gn = np.linalg.norm(g, axis=1)
    guarded = gn < GRAD_FLOOR
    cos = np.zeros_like(f)
    ok = ~guarded
    cos[ok] = np.einsum('ij,ij->i', normals[ok], g[ok]) / gn[ok]
    normal_term = np.where(guarded, 2.0, 1.0 - cos)
    value = float(np.mean(lambda_d * np.abs(f) + lambda_n * normal_term))
    return value, guarded


def boundary_loss(field, points, targets):
    """Mean absolute error between f and the boundary target distances."""
    points = np.atleast_2d(points)
    if len(points) == 0:
        return 0.0
    f, _, _ = _field_eval(field, points)
    return float(np.mean(np.abs(f - np.asarray(targets))))


def eikonal_loss(field, points):
    """Mean | |grad f| - 1 | over the samples."""
    _, g, _ = _field_eval(field, points, grad=True)
    return float(np.mean(np.abs(np.linalg.norm(g, axis=1) - 1.0)))


def hessian_loss(field, points):
    """Mean element-wise 1-norm of the 3x3 second-derivative matrix."""
    _, _, h = _field_eval(field, points, grad=True, hess=True)
    return float(np.mean(np.abs(h).sum(axis=(1, 2))))


def dirac(z, eps):
    """Regularized Dirac: (eps / pi) / (eps^2 + z^2)."""
    z = np.asarray(z, dtype=np.float64)
    return (eps / np.pi) / (eps * eps + z * z)


def dirac_grad(z, eps):
    z = np.asarray(z, dtype=np.float64)
    return -(eps / np.pi) * 2.0 * z / (eps * eps + z * z) ** 2


def minimal_surface_loss(field, points, eps):
    """Mean regularized-Dirac response of f: a Monte Carlo surface-area
    penalty."""
    if eps <= 0:
        raise ConfigError("dirac epsilon must be positive")
    f, _, _ = _field_eval(field, points)
    return float(np.mean(dirac(f, eps)))


# ---------------------------------------------------------------------------
# render term

def _rays_for_pixels(cameras, pix: PixelBatch):
    origins = np.empty((len(pix), 3))
    dirs = np.empty((len(pix), 3))
    for ci in np.unique(pix.cam_indices):
        m = pix.cam_indices == ci
        o, d = pixel_rays(cameras[ci], pix.uv[m])
        origins[m] = o
        dirs[m] = d
    return origins, dirs


@dataclass
class RenderTerm:
    value: float
    n_hit: int
    n_skipped: int          # missed, non-converged, or tangential pixels
    all_missed: bool


def render_term(sdf_field, slf_field, cameras, pix: PixelBatch,
                trace_cfg: TraceConfig, mode: str = MODE_FROZEN,
                grad_scale: float = 1.0, want_grads: bool = False):
    """Mean L1 color error over pixels whose rays hit the surface.

    In differentiable mode the distance network receives gradients through
    the reparameterized intersection (scaled by ``grad_scale``) and through
    the location descriptor; in frozen mode only the light field trains.
    Returns (RenderTerm, theta_grad | None, phi_grad | None).
    """
    if mode not in (MODE_FROZEN, MODE_DIFFERENTIABLE):
        raise ConfigError(f"unknown render mode {mode!r}")
    n_pix = len(pix)
    if n_pix == 0:
        return RenderTerm(0.0, 0, 0, False), None, None
    origins, dirs = _rays_for_pixels(cameras, pix)
    res = sphere_trace(sdf_field, origins, dirs, trace_cfg)
    hit = res.status == STATUS_HIT
    if not np.any(hit):
        term = RenderTerm(0.0, 0, n_pix, True)
        return term, None, None

    def eval_hits(points):
        if hasattr(sdf_field, "evaluate"):
            e = sdf_field.evaluate(points, grad=True)
            return e.grad, e.descriptor, e.record
        return sdf_field.gradients(points), None, None

    x0 = res.points[hit]
    v = dirs[hit]
    gt = pix.rgb[hit]
    g0, desc, rec = eval_hits(x0)
    denom = np.einsum('ij,ij->i', v, g0)
    usable = np.abs(denom) >= TANGENT_FLOOR
    n_tangential = int((~usable).sum())
    if not np.any(usable):
        term = RenderTerm(0.0, 0, n_pix, True)
        return term, None, None
    if n_tangential:
        x0, v, gt, denom = x0[usable], v[usable], gt[usable], denom[usable]
        g0, desc, rec = eval_hits(x0)

    normals = g0 / np.linalg.norm(g0, axis=1, keepdims=True)
    rgb, slf_rec = slf_field.colors(x0, normals, v, desc, record=True)
    resid = rgb - gt
    n_hit = len(x0)
    value = float(np.abs(resid).sum() / n_hit)
    term = RenderTerm(value, n_hit, n_pix - n_hit, False)
    if not want_grads:
        return term, None, None

    rgb_bar = np.sign(resid) / n_hit
    if mode == MODE_FROZEN:
        phi_grad = slf_field.backprop(slf_rec, rgb_bar)
        return term, None, phi_grad
    phi_grad, x_bar, desc_bar = slf_field.backprop(slf_rec, rgb_bar,
                                                   want_input_adjoint=True)
    f_bar = -grad_scale * np.einsum('ij,ij->i', x_bar, v) / denom
    theta_grad = sdf_field.backprop(rec, f_bar=f_bar, desc_bar=desc_bar)
    return term, theta_grad, phi_grad


def render_loss(sdf_field, slf_field, cameras, pix, trace_cfg,
                mode=MODE_FROZEN):
    term, _, _ = render_term(sdf_field, slf_field, cameras, pix, trace_cfg,
                             mode=mode)
    return term.value


# ---------------------------------------------------------------------------
# totals

_TERM_KEYS = ("data", "boundary", "eikonal", "hessian", "minimal_surface",
              "render")


def total_loss(sdf_field, slf_field, batch: SampleBatch, weights: LossWeights,
               cameras=None, trace_cfg: TraceConfig | None = None,
               mode: str = MODE_FROZEN):
    """Weighted sum and unweighted per-term breakdown."""
    breakdown = {}
    breakdown["data"] = data_loss(sdf_field, batch.data_points,
                                  batch.data_normals, weights.distance,
                                  weights.normal) if len(batch.data_points) else 0.0
    breakdown["boundary"] = boundary_loss(sdf_field, batch.boundary_points,
                                          batch.boundary_targets)
    breakdown["eikonal"] = eikonal_loss(sdf_field, batch.uniform)
    breakdown["hessian"] = hessian_loss(sdf_field, batch.uniform) \
        if weights.hessian > 0 else 0.0
    breakdown["minimal_surface"] = minimal_surface_loss(
        sdf_field, batch.uniform, weights.epsilon)
    if batch.pixels is not None and weights.render > 0:
        breakdown["render"] = render_loss(sdf_field, slf_field, cameras,
                                          batch.pixels, trace_cfg, mode)
    else:
        breakdown["render"] = 0.0
    total = combine(breakdown, weights)
    return total, breakdown


def combine(breakdown, weights: LossWeights) -> float:
    w = {"data": weights.data, "boundary": weights.boundary,
         "eikonal": weights.eikonal, "hessian": weights.hessian,
         "minimal_surface": weights.minimal_surface, "render": weights.render}
    return float(sum(w[k] * breakdown[k] for k in _TERM_KEYS))


@dataclass
class LossReport:
    total: float
    breakdown: dict
    guarded_normals: int = 0
    render_hits: int = 0
    render_skipped: int = 0
    render_all_missed: bool = False


def total_loss_and_grads(sdf_field, slf_field, batch: SampleBatch,
                         weights: LossWeights, cameras=None,
                         trace_cfg: TraceConfig | None = None,
                         mode: str = MODE_FROZEN, grad_scale: float = 1.0,
                         chunk: int = 4096):
    """All loss terms plus exact parameter gradients for both networks.

    Batches are processed in fixed-size chunks in a fixed order, so the
    result is independent of memory limits and bitwise reproducible.
    """
    theta_grad = np.zeros_like(sdf_field.params.values)
    phi_grad = np.zeros_like(slf_field.params.values)
    breakdown = dict.fromkeys(_TERM_KEYS, 0.0)
    report = LossReport(0.0, breakdown)

    # data term
    n_d = len(batch.data_points)
    guarded_total = 0
    for s in range(0, n_d, chunk):
        X = batch.data_points[s:s + chunk]
        N = batch.data_normals[s:s + chunk]
        ev = sdf_field.evaluate(X, grad=True)
        gn = np.linalg.norm(ev.grad, axis=1)
        guarded = gn < GRAD_FLOOR
        ok = ~guarded
        cos = np.zeros(len(X))
        cos[ok] = np.einsum('ij,ij->i', N[ok], ev.grad[ok]) / gn[ok]
        normal_term = np.where(guarded, 2.0, 1.0 - cos)
        breakdown["data"] += float(
            (weights.distance * np.abs(ev.f)
             + weights.normal * normal_term).sum()) / n_d
        guarded_total += int(guarded.sum())
        f_bar = weights.data * weights.distance * np.sign(ev.f) / n_d
        g_bar = np.zeros_like(ev.grad)
        coef = weights.data * weights.normal / n_d
        g_bar[ok] = -coef * (N[ok] / gn[ok, None]
                             - (cos[ok] * 1.0)[:, None]
                             * ev.grad[ok] / (gn[ok, None] ** 2))
        theta_grad += sdf_field.backprop(ev.record, f_bar=f_bar, grad_bar=g_bar)
    report.guarded_normals = guarded_total

    # boundary term
    n_b = len(batch.boundary_points)
    for s in range(0, n_b, chunk):
        X = batch.boundary_points[s:s + chunk]
        tgt = batch.boundary_targets[s:s + chunk]
        ev = sdf_field.evaluate(X)
        diff = ev.f - tgt
        breakdown["boundary"] += float(np.abs(diff).sum()) / n_b
        f_bar = weights.boundary * np.sign(diff) / n_b
        theta_grad += sdf_field.backprop(ev.record, f_bar=f_bar)

    # uniform-sample terms share one evaluation
    n_u = len(batch.uniform)
    want_h = weights.hessian > 0 and sdf_field.arch.smooth
    for s in range(0, n_u, chunk):
        X = batch.uniform[s:s + chunk]
        ev = sdf_field.evaluate(X, grad=True, hess=want_h)
        gn = np.linalg.norm(ev.grad, axis=1)
        breakdown["eikonal"] += float(np.abs(gn - 1.0).sum()) / n_u
        safe = gn > 1e-300
        g_bar = np.zeros_like(ev.grad)
        g_bar[safe] = (weights.eikonal * np.sign(gn[safe] - 1.0) / n_u)[:, None] \
            * ev.grad[safe] / gn[safe, None]
        h_bar = None
        if want_h:
            breakdown["hessian"] += float(np.abs(ev.hess).sum()) / n_u
            h_bar = weights.hessian * np.sign(ev.hess) / n_u
        breakdown["minimal_surface"] += float(
            dirac(ev.f, weights.epsilon).sum()) / n_u
        f_bar = weights.minimal_surface * dirac_grad(ev.f, weights.epsilon) / n_u
        theta_grad += sdf_field.backprop(ev.record, f_bar=f_bar,
                                         grad_bar=g_bar, hess_bar=h_bar)

    # render term
    if batch.pixels is not None and len(batch.pixels) and weights.render > 0:
        term, tg, pg = render_term(sdf_field, slf_field, cameras, batch.pixels,
                                   trace_cfg, mode=mode, grad_scale=grad_scale,
                                   want_grads=True)
        breakdown["render"] = term.value
        report.render_hits = term.n_hit
        report.render_skipped = term.n_skipped
        report.render_all_missed = term.all_missed
        if tg is not None:
            theta_grad += weights.render * tg
        if pg is not None:
            phi_grad += weights.render * pg

    report.total = combine(breakdown, weights)
    if not np.isfinite(report.total):
        bad = [k for k in _TERM_KEYS if not np.isfinite(breakdown[k])]
        raise NumericFaultError(f"non-finite loss terms: {bad}")
    return report, theta_grad, phi_grad


# ---------------------------------------------------------------------------
# integral estimators

def estimate_area(field, box: Box, eps: float, n_samples: int, seed: int,
                  chunk: int = 1_000_000) -> float:
    """Monte Carlo surface area: volume(box) * mean dirac_eps(f)."""
    if n_samples < 1:
        raise ConfigError("need at least one sample")
    rng = np.random.default_rng(seed)
    acc = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        X = rng.uniform(box.lo, box.hi, (m, 3))
        acc += float(dirac(field.values(X), eps).sum())
        done += m
    return box.volume * acc / n_samples


def estimate_volume(field, box: Box, n_samples: int, seed: int,
                    chunk: int = 1_000_000) -> float:
    """Monte Carlo interior volume: volume(box) * fraction of f < 0."""
    if n_samples < 1:
        raise ConfigError("need at least one sample")
    rng = np.random.default_rng(seed)
    acc = 0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        X = rng.uniform(box.lo, box.hi, (m, 3))
        acc += int((field.values(X) < 0.0).sum())
        done += m
    return box.volume * acc / n_samples
