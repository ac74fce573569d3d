"""Structural-consistency losses on warped-event volumes, plus the supervised
endpoint loss and the curriculum that blends them.

Volume losses return their value together with the gradient with respect to
the volume they consume; :class:`Objective` chains those through
:meth:`WarpPlan.backward` to the Bezier control points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .trajectory import BezierFlowField
from .voxel import BinGrid, DEFAULT_BINS
from .vwe import DEFAULT_K, WarpedVolume, WarpPlan, default_xi_samples


@dataclass(frozen=True)
class LossConfig:
    """Loss hyper-parameters.

    ``r`` is the aggregation radius on the relative-time axis in seconds;
    ``None`` means two sample spacings. ``aggregate=False`` makes the local
    consistency term use the raw slices.
    """

    r: float | None = None
    w_xi: str = "triangular"
    K: int = DEFAULT_K
    B: int = DEFAULT_BINS
    gamma: tuple = (0.25, 0.75)
    E_c: float = 100.0
    eps: float = 1e-8
    activity_threshold: float = 1e-6
    aggregate: bool = True

    def __post_init__(self):
        if self.r is not None and not self.r > 0:
            raise ConfigError("aggregation radius r must be positive")
        if not np.isclose(sum(self.gamma), 1.0):
            raise ConfigError(f"scale weights must sum to 1, got {self.gamma}")
        if self.E_c < 1:
            raise ConfigError("curriculum length E_c must be at least 1")
        if self.w_xi not in _KERNELS:
            raise ConfigError(f"unknown weighting kernel {self.w_xi!r}")
        if self.K < 1 or self.B < 1:
            raise ConfigError("K and B must be positive")


@dataclass
class LossBreakdown:
    lsc: float
    tc: float
    flow: float | None
    weights: tuple
    total: float

    def to_dict(self):
        return {"lsc": self.lsc, "tc": self.tc, "flow": self.flow, "weights": list(self.weights), "total": self.total}

    def to_json(self):
        return json.dumps(self.to_dict())


_KERNELS = {
    "triangular": lambda d, r: np.maximum(0.0, 1.0 - np.abs(d) / r),
    "uniform": lambda d, r: (np.abs(d) <= r).astype(np.float64),
}


def aggregation_matrix(xi_samples, r, w_xi="triangular"):
    """Row-normalized (K, K) quadrature weights of the local xi-aggregation.

    Row ``k`` integrates ``w(s - xi_k) VWE(s)`` over [xi_k - r, xi_k + r] with
    the trapezoidal rule on the samples inside the window.
    """
    xi = np.asarray(xi_samples, dtype=np.float64)
    K = xi.size
    if K == 1:
        return np.ones((1, 1))
    d = xi[1] - xi[0]
    if r < d:
        return np.eye(K)
    kern = _KERNELS[w_xi]
    A = np.zeros((K, K))
    tol = 1e-9 * d
    for k in range(K):
        inside = np.nonzero(np.abs(xi - xi[k]) <= r + tol)[0]
        trap = np.full(inside.size, d)
        if inside.size > 1:
            trap[0] = trap[-1] = d / 2.0
        wts = trap * kern(xi[inside] - xi[k], r)
        A[k, inside] = wts / wts.sum()
    return A


def _radius(cfg, xi_samples):
    if cfg.r is not None:
        return cfg.r
    xi = np.asarray(xi_samples)
    return 2.0 * (xi[1] - xi[0]) if xi.size > 1 else 1.0


def local_aggregate(volume, r, w_xi="triangular"):
    """(K, H, W) locally aggregated volume."""
    A = aggregation_matrix(volume.xi_samples, r, w_xi)
    return np.einsum("kj,jhw->khw", A, volume.slices)


def lsc_loss(volume, cfg=LossConfig()):
    """Local structural consistency. Returns ``(value, d value / d slices)``.

    ``(1/K) sum_k sum_x |V(x, xi_k) - mean_k V(x, .)|^2`` where ``V`` is the
    locally aggregated volume.
    """
    K = volume.K
    if K < 2:
        return 0.0, np.zeros_like(volume.slices)
    A = aggregation_matrix(volume.xi_samples, _radius(cfg, volume.xi_samples), cfg.w_xi) if cfg.aggregate else np.eye(K)
    V = np.einsum("kj,jhw->khw", A, volume.slices)
    dev = V - V.mean(axis=0, keepdims=True)
    value = float(np.sum(dev * dev) / K)
    grad = np.einsum("kj,khw->jhw", A, 2.0 * dev / K)
    return value, grad


def _central_diff(f, axis):
    """Central difference with zero padding outside the volume (unit step)."""
    g = np.zeros_like(f)
    n = f.shape[axis]
    if n < 2:
        return g
    hi = [slice(None)] * f.ndim
    lo = [slice(None)] * f.ndim
    mid = [slice(None)] * f.ndim
    # g[i] = (f[i+1] - f[i-1]) / 2
    mid[axis], hi[axis] = slice(0, n - 1), slice(1, n)
    g[tuple(mid)] += 0.5 * f[tuple(hi)]
    mid[axis], lo[axis] = slice(1, n), slice(0, n - 1)
    g[tuple(mid)] -= 0.5 * f[tuple(lo)]
    return g


_GRAD_AXES = (-1, -2, -3)  # x, y, xi


def _activity(support, threshold):
    box = ndimage.uniform_filter(support, size=(1, 3, 3, 3), mode="constant") * 27.0
    return box > threshold


def tc_loss(volume, cfg=LossConfig()):
    """Trajectory consistency. Returns ``(value, d value / d per_bin)``.

    Each bin volume is scaled to unit RMS; its joint gradient over (x, y, xi)
    is taken by central differences, and the population variance across the
    bins active at each voxel is summed over voxels and gradient components,
    then divided by ``K``.
    """
    if volume.per_bin is None:
        raise ConfigError("trajectory consistency needs the per-bin decomposition")
    per_bin = volume.per_bin
    B, K = per_bin.shape[:2]
    if B < 2:
        return 0.0, np.zeros_like(per_bin)
    support = volume.support if volume.support is not None else np.abs(per_bin)
    n_vox = per_bin[0].size
    rms = np.sqrt(np.einsum("bkhw,bkhw->b", per_bin, per_bin) / n_vox)[:, None, None, None]
    scale = rms + cfg.eps
    normed = per_bin / scale
    active = _activity(support, cfg.activity_threshold).astype(np.float64)
    count = active.sum(axis=0)
    inv = np.where(count >= 2, 1.0 / np.maximum(count, 1.0), 0.0)

    value = 0.0
    d_normed = np.zeros_like(per_bin)
    for axis in _GRAD_AXES:
        G = _central_diff(normed, axis)
        mean = (active * G).sum(axis=0) * inv
        dev = (G - mean) * active
        value += float(np.sum((dev * dev).sum(axis=0) * inv))
        d_normed -= _central_diff(2.0 * dev * inv / K, axis)
    # chain through the per-bin RMS scaling
    proj = np.einsum("bkhw,bkhw->b", d_normed, per_bin)[:, None, None, None]
    safe_rms = np.where(rms > 0, rms, 1.0)
    d_bins = d_normed / scale - per_bin * proj / (scale**2 * n_vox * safe_rms)
    return value / K, d_bins


def endpoint_loss(preds, gt, mask, gamma=None):
    """Weighted multi-scale endpoint L1 loss.

    ``preds`` holds one (H, W, 2) endpoint raster (or :class:`BezierFlowField`)
    per scale, all at the ground-truth resolution. Returns the value and one
    gradient raster per scale.
    """
    preds = [p.p2 if isinstance(p, BezierFlowField) else np.asarray(p, dtype=np.float64) for p in preds]
    if gamma is None:
        gamma = (1.0,) if len(preds) == 1 else (0.25, 0.75)
    if len(gamma) != len(preds):
        raise ConfigError(f"{len(preds)} predictions but {len(gamma)} scale weights")
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        raise ConfigError("endpoint loss needs at least one valid ground-truth pixel")
    value = 0.0
    grads = []
    for g, u in zip(gamma, preds):
        if u.shape != gt.shape:
            raise ConfigError(f"prediction shape {u.shape} does not match ground truth {gt.shape}")
        diff = np.where(mask[..., None], u - gt, 0.0)
        value += g * float(np.abs(diff).sum()) / n
        grads.append(g * np.sign(diff) / n)
    return value, grads


def curriculum_weights(e, E_c):
    """``(lambda_flow, lambda_lsc, lambda_tc)`` at epoch ``e``."""
    if e < 0:
        raise ConfigError(f"epoch must be non-negative, got {e}")
    lam_flow = max(0.0, 1.0 - e / E_c)
    lam = (1.0 - lam_flow) / 2.0
    return lam_flow, lam, lam


@dataclass
class Objective:
    """Curriculum-weighted objective over one event stream.

    ``flow_term`` maps the endpoint raster ``p2`` to ``(value, d value / d p2)``;
    it is required whenever the flow weight is positive.
    """

    stream: object
    like: BezierFlowField
    cfg: LossConfig = field(default_factory=LossConfig)
    t0: float | None = None
    backend: str | None = None

    def __post_init__(self):
        self.bins = BinGrid(self.stream.t_start, self.stream.t_end, self.cfg.B)
        self.xi = default_xi_samples(self.bins, self.cfg.K)
        if self.t0 is None:
            self.t0 = 0.5 * (self.stream.t_start + self.stream.t_end)
        self.plan = WarpPlan.for_vwe(self.stream, self.like, self.bins, self.t0, self.xi, self.backend)

    def volume(self, fld):
        per_bin = self.plan.splat(fld)
        support = self.plan.splat(fld, signed=False)
        return WarpedVolume(per_bin.sum(axis=0), self.xi, per_bin, support)

    def self_supervised(self, fld):
        """``(lsc, tc, d lsc / d (p1, p2), d tc / d (p1, p2))``."""
        vol = self.volume(fld)
        lsc, d_slices = lsc_loss(vol, self.cfg)
        tc, d_bins = tc_loss(vol, self.cfg)
        g_lsc = self.plan.backward(fld, np.broadcast_to(d_slices, vol.per_bin.shape))
        g_tc = self.plan.backward(fld, d_bins)
        return lsc, tc, g_lsc, g_tc

    def evaluate(self, fld, e, flow_term=None):
        weights = curriculum_weights(e, self.cfg.E_c)
        lam_flow, lam_lsc, lam_tc = weights
        if lam_flow > 0 and flow_term is None:
            raise ConfigError("flow weight is positive but no ground-truth anchors were supplied")
        lsc, tc, g_lsc, g_tc = self.self_supervised(fld)
        dp1 = lam_lsc * g_lsc[0] + lam_tc * g_tc[0]
        dp2 = lam_lsc * g_lsc[1] + lam_tc * g_tc[1]
        flow = None
        total = lam_lsc * lsc + lam_tc * tc
        if flow_term is not None:
            flow, d_flow = flow_term(fld.p2)
            total += lam_flow * flow
            dp2 = dp2 + lam_flow * d_flow
        return LossBreakdown(lsc, tc, flow, weights, total), (dp1, dp2)


def total_loss(stream, fld, e, cfg=LossConfig(), gt=None, mask=None, backend=None):
    """Curriculum objective at epoch ``e`` with single-scale endpoint supervision.

    Returns ``(LossBreakdown, (d p1, d p2))``.
    """
    flow_term = None
    if gt is not None:
        mask = np.ones(fld.shape, dtype=bool) if mask is None else mask

        def flow_term(p2):
            v, (g,) = endpoint_loss([p2], gt, mask, (1.0,))
            return v, g

    return Objective(stream, fld, cfg, backend=backend).evaluate(fld, e, flow_term)
