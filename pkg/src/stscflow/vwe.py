"""Volumetric warped events (VWE) and the single-slice image of warped events (IWE).

Events of bin ``b`` (centre ``c_b``) are warped from ``t_i`` to ``t_i + t0 - c_b``,
i.e. every bin is aligned to the reference ``t0`` while each event keeps its
relative time ``xi_i = t_i - c_b``. Mass is splatted with a bilinear kernel in
space and a triangular kernel (support = sample spacing) along ``xi``.

:class:`WarpPlan` caches everything that does not depend on the flow, so the
volume and its adjoint can be re-evaluated cheaply inside an optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError
from .trajectory import bezier_basis, bilinear_corners

DEFAULT_K = 5


def default_xi_samples(bins, K=DEFAULT_K):
    """``K`` relative times spanning one bin, [-tau/2, +tau/2]."""
    if K == 1:
        return np.zeros(1)
    return np.linspace(-bins.tau / 2.0, bins.tau / 2.0, K)


def _check_xi(xi):
    xi = np.asarray(xi, dtype=np.float64)
    if xi.ndim != 1 or xi.size < 1:
        raise ConfigError("xi_samples must be a non-empty 1-D sequence")
    if xi.size > 1:
        step = np.diff(xi)
        if np.any(step <= 0) or not np.allclose(step, step[0], rtol=1e-9, atol=0):
            raise ConfigError("xi_samples must be uniformly spaced and increasing")
        if not np.isclose(xi[0], -xi[-1], rtol=1e-9, atol=1e-15):
            raise ConfigError("xi_samples must be symmetric about 0")
    return xi


def temporal_taps(xi_events, xi_samples):
    """Lower sample index and its weight for the triangular kernel on the xi axis."""
    xi_samples = np.asarray(xi_samples, dtype=np.float64)
    n = np.size(xi_events)
    if xi_samples.size == 1:
        return np.zeros(n, dtype=np.int64), np.ones(n)
    d = xi_samples[1] - xi_samples[0]
    u = (np.asarray(xi_events, dtype=np.float64) - xi_samples[0]) / d
    k0 = np.floor(u).astype(np.int64)
    return k0, 1.0 - (u - k0)


@dataclass
class WarpedVolume:
    slices: np.ndarray  # (K, H, W)
    xi_samples: np.ndarray  # (K,)
    per_bin: np.ndarray | None = None  # (B, K, H, W)
    support: np.ndarray | None = None  # unsigned per-bin mass, same shape as per_bin

    @property
    def K(self):
        return self.slices.shape[0]


class WarpPlan:
    """Flow-independent per-event quantities for repeated splatting.

    Event ``i`` lands at ``x_i + da_i * P1(x_i) + db_i * P2(x_i)`` in bin-slot
    ``b_i`` with temporal taps ``(k0_i, wk_i)``.
    """

    def __init__(self, stream, field_shape, t_src, t_dst, t_window, bin_idx, k0, wk, n_bins, n_samples, backend=None):
        h, w = field_shape
        if (stream.height, stream.width) != (h, w):
            raise ConfigError(f"flow field is {h}x{w} but the sensor is {stream.height}x{stream.width}")
        self.shape = (n_bins, n_samples, h, w)
        self.x = stream.x.astype(np.float64)
        self.y = stream.y.astype(np.float64)
        self.pol = stream.p.astype(np.float64)
        t0, t1 = t_window
        a_src, b_src = bezier_basis((np.asarray(t_src, float) - t0) / (t1 - t0))
        a_dst, b_dst = bezier_basis((np.asarray(t_dst, float) - t0) / (t1 - t0))
        self.da = np.broadcast_to(a_dst - a_src, self.x.shape).astype(np.float64)
        self.db = np.broadcast_to(b_dst - b_src, self.x.shape).astype(np.float64)
        self.bin_idx = np.asarray(bin_idx, dtype=np.int64)
        self.k0 = np.asarray(k0, dtype=np.int64)
        self.wk = np.asarray(wk, dtype=np.float64)
        self.idx, self.wts = bilinear_corners(self.x, self.y, h, w)
        self.backend = backend

    def __len__(self):
        return self.x.size

    @classmethod
    def for_vwe(cls, stream, field, bins, t0, xi_samples, backend=None):
        xi_samples = _check_xi(xi_samples)
        if not (stream.t_start <= t0 <= stream.t_end):
            raise DomainError(f"reference time {t0} outside the window [{stream.t_start}, {stream.t_end}]")
        b = bins.index(stream.t)
        xi = stream.t - bins.centers[b]
        k0, wk = temporal_taps(xi, xi_samples)
        return cls(stream, field.shape, stream.t, t0 + xi, (field.t_start, field.t_end), b, k0, wk, bins.B, xi_samples.size, backend)

    @classmethod
    def for_iwe(cls, stream, field, t_ref, backend=None):
        n = len(stream)
        return cls(
            stream, field.shape, stream.t, np.full(n, float(t_ref)), (field.t_start, field.t_end),
            np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64), np.ones(n), 1, 1, backend,
        )

    def positions(self, field):
        """Warped positions and in-frame mask for ``field``."""
        p1 = np.einsum("nc,ncd->nd", self.wts, field.p1.reshape(-1, 2)[self.idx])
        p2 = np.einsum("nc,ncd->nd", self.wts, field.p2.reshape(-1, 2)[self.idx])
        qx = self.x + self.da * p1[:, 0] + self.db * p2[:, 0]
        qy = self.y + self.da * p1[:, 1] + self.db * p2[:, 1]
        _, _, h, w = self.shape
        valid = (qx >= 0) & (qx <= w - 1) & (qy >= 0) & (qy <= h - 1)
        return qx, qy, valid

    def splat(self, field, signed=True):
        """(B, K, H, W) volume; ``signed=False`` splats unit mass per event."""
        qx, qy, valid = self.positions(field)
        w = (self.pol if signed else np.ones_like(self.pol)) * valid
        return kernels.splat(self.shape, qx, qy, w, self.bin_idx, self.k0, self.wk, backend=self.backend)

    def backward(self, field, grad_volume):
        """Gradient of ``sum(grad_volume * splat(field))`` w.r.t. (p1, p2)."""
        qx, qy, valid = self.positions(field)
        w = self.pol * valid
        gx, gy = kernels.splat_grad(grad_volume, qx, qy, w, self.bin_idx, self.k0, self.wk, backend=self.backend)
        h, w_ = self.shape[2:]
        size = h * w_
        flat_idx = self.idx.ravel()
        out = []
        for coef in (self.da, self.db):
            cw = (self.wts * coef[:, None]).ravel()
            gxw = np.bincount(flat_idx, weights=cw * np.repeat(gx, 4), minlength=size)
            gyw = np.bincount(flat_idx, weights=cw * np.repeat(gy, 4), minlength=size)
            out.append(np.stack([gxw, gyw], axis=-1).reshape(h, w_, 2))
        return out[0], out[1]


def build_vwe_bin(stream, field, bins, b, t0, xi_samples, backend=None):
    """(K, H, W) volume of the events in bin ``b`` (zero-based)."""
    if not 0 <= b < bins.B:
        raise ConfigError(f"bin index {b} outside 0..{bins.B - 1}")
    sub = stream.select(bins.index(stream.t) == b)
    plan = WarpPlan.for_vwe(sub, field, bins, t0, xi_samples, backend)
    return plan.splat(field)[b]


def build_vwe(stream, field, bins, t0=None, xi_samples=None, keep_per_bin=True, backend=None, plan=None):
    """Full VWE: the sum over bins of the bin-wise volumes."""
    if t0 is None:
        t0 = 0.5 * (stream.t_start + stream.t_end)
    if xi_samples is None:
        xi_samples = default_xi_samples(bins)
    if plan is None:
        plan = WarpPlan.for_vwe(stream, field, bins, t0, xi_samples, backend)
    per_bin = plan.splat(field)
    support = plan.splat(field, signed=False)
    return WarpedVolume(per_bin.sum(axis=0), np.asarray(xi_samples, float), per_bin if keep_per_bin else None, support)


def build_iwe(stream, field, t_ref, backend=None):
    """(H, W) image of all events warped to ``t_ref`` (bilinear splat)."""
    if not (stream.t_start <= t_ref <= stream.t_end):
        raise DomainError(f"reference time {t_ref} outside the window [{stream.t_start}, {stream.t_end}]")
    return WarpPlan.for_iwe(stream, field, t_ref, backend).splat(field)[0, 0]
