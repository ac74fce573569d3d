"""Per-pixel quadratic Bezier trajectories and event warping.

A pixel's displacement at normalized time ``s`` in [0, 1] is

    D(s) = 2 s (1 - s) P1 + s^2 P2

so ``D(0) = 0`` and ``D(1) = P2`` (the conventional endpoint flow). Control
points are sampled bilinearly at the event's source position; warping between
two times uses that same sample for both ends.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError


def bezier_basis(s):
    """Return the weights ``(a, b)`` of P1 and P2 at normalized time ``s``."""
    s = np.asarray(s, dtype=np.float64)
    return 2.0 * s * (1.0 - s), s * s


def bilinear_corners(x, y, height, width):
    """Flat corner indices and weights for bilinear sampling of an H x W raster.

    Positions are clamped to the pixel-centre grid. Returns ``(idx, wts)``, both
    of shape (N, 4).
    """
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, width - 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, height - 1)
    x0 = np.clip(np.floor(x).astype(np.int64), 0, max(width - 2, 0))
    y0 = np.clip(np.floor(y).astype(np.int64), 0, max(height - 2, 0))
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = x - x0
    fy = y - y0
    idx = np.stack([y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1], axis=-1)
    wts = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=-1)
    return idx, wts


@dataclass(frozen=True)
class BezierFlowField:
    """Control-point rasters ``p1``, ``p2`` of shape (H, W, 2) in pixels."""

    p1: np.ndarray
    p2: np.ndarray
    t_start: float = 0.0
    t_end: float = 0.1

    def __post_init__(self):
        p1 = np.asarray(self.p1, dtype=np.float64)
        p2 = np.asarray(self.p2, dtype=np.float64)
        if p1.ndim != 3 or p1.shape[-1] != 2 or p1.shape != p2.shape:
            raise ValidationError(f"control rasters must share shape (H, W, 2), got {p1.shape} and {p2.shape}")
        if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(p2))):
            raise ValidationError("control points must be finite")
        if not self.t_end > self.t_start:
            raise ValidationError(f"empty validity window [{self.t_start}, {self.t_end}]")
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "p2", p2)

    @classmethod
    def zeros(cls, height, width, t_start=0.0, t_end=0.1):
        z = np.zeros((height, width, 2))
        return cls(z, z.copy(), t_start, t_end)

    @classmethod
    def constant(cls, height, width, p1, p2, t_start=0.0, t_end=0.1):
        ones = np.ones((height, width, 1))
        return cls(ones * np.asarray(p1, float), ones * np.asarray(p2, float), t_start, t_end)

    @classmethod
    def straight(cls, height, width, endpoint, t_start=0.0, t_end=0.1):
        """Constant-velocity field (``P1 = P2 / 2``) with the given endpoint."""
        e = np.asarray(endpoint, float)
        return cls.constant(height, width, e / 2.0, e, t_start, t_end)

    @property
    def shape(self):
        return self.p1.shape[:2]

    @property
    def duration(self):
        return self.t_end - self.t_start

    @property
    def endpoint(self):
        return self.p2

    def params(self):
        """Flat parameter vector ``[p1, p2]``."""
        return np.concatenate([self.p1.ravel(), self.p2.ravel()])

    def with_params(self, theta):
        n = self.p1.size
        theta = np.asarray(theta, dtype=np.float64)
        return BezierFlowField(theta[:n].reshape(self.p1.shape), theta[n:].reshape(self.p2.shape), self.t_start, self.t_end)

    def scaled(self, factor):
        return BezierFlowField(self.p1 * factor, self.p2 * factor, self.t_start, self.t_end)

    def normalized_time(self, t):
        return (np.asarray(t, dtype=np.float64) - self.t_start) / self.duration

    def sample(self, x, y):
        """Bilinearly interpolated ``(P1, P2)`` at positions, each (N, 2)."""
        h, w = self.shape
        idx, wts = bilinear_corners(x, y, h, w)
        p1 = np.einsum("nc,ncd->nd", wts, self.p1.reshape(-1, 2)[idx])
        p2 = np.einsum("nc,ncd->nd", wts, self.p2.reshape(-1, 2)[idx])
        return p1, p2

    def to_raster(self):
        """(H, W, 4) array with channels p1x, p1y, p2x, p2y."""
        return np.concatenate([self.p1, self.p2], axis=-1)

    @classmethod
    def from_raster(cls, raster, t_start=0.0, t_end=0.1):
        raster = np.asarray(raster, dtype=np.float64)
        if raster.ndim != 3 or raster.shape[-1] != 4:
            raise ValidationError(f"flow raster must have 4 channels, got shape {raster.shape}")
        return cls(raster[..., :2], raster[..., 2:], t_start, t_end)


def displacement(field, x, s):
    """Displacement of the trajectory through ``x`` = (x, y) at normalized time ``s``."""
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr < 0.0) or np.any(s_arr > 1.0):
        raise DomainError(f"normalized time must lie in [0, 1], got {s}")
    pos = np.atleast_2d(np.asarray(x, dtype=np.float64))
    h, w = field.shape
    if np.any(pos[:, 0] < 0) or np.any(pos[:, 0] > w - 1) or np.any(pos[:, 1] < 0) or np.any(pos[:, 1] > h - 1):
        raise DomainError(f"position {x} outside the {w}x{h} sensor")
    p1, p2 = field.sample(pos[:, 0], pos[:, 1])
    a, b = bezier_basis(s_arr)
    out = a[..., None] * p1 + b[..., None] * p2
    return out[0] if np.ndim(x) == 1 else out


def warp_positions(field, x, y, t, t_target):
    """Vectorized warp of events to ``t_target`` (scalar or per event).

    Times may extrapolate beyond the field window; callers that need the strict
    domain check use :func:`warp_event`. Returns ``(qx, qy, valid)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p1, p2 = field.sample(x, y)
    a_src, b_src = bezier_basis(field.normalized_time(t))
    a_dst, b_dst = bezier_basis(field.normalized_time(t_target))
    da = a_dst - a_src
    db = b_dst - b_src
    qx = x + da * p1[:, 0] + db * p2[:, 0]
    qy = y + da * p1[:, 1] + db * p2[:, 1]
    h, w = field.shape
    valid = (qx >= 0) & (qx <= w - 1) & (qy >= 0) & (qy <= h - 1)
    return qx, qy, valid


def warp_event(field, event, t_target):
    """Warp one event to ``t_target``; returns ``((x, y), valid)``."""
    for t in (event.t, t_target):
        if t < field.t_start or t > field.t_end:
            raise DomainError(f"time {t} outside the field window [{field.t_start}, {field.t_end}]")
    qx, qy, valid = warp_positions(field, [event.x], [event.y], [event.t], t_target)
    return (float(qx[0]), float(qy[0])), bool(valid[0])
