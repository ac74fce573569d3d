"""Voxel-grid event representation with trilinear (triangular-kernel) splatting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError

DEFAULT_BINS = 15


@dataclass(frozen=True)
class BinGrid:
    """``B`` uniform temporal bins over [t_start, t_end]; centres at (b + 1/2) tau."""

    t_start: float
    t_end: float
    B: int

    def __post_init__(self):
        if self.B < 1:
            raise ConfigError(f"bin count must be positive, got {self.B}")
        if not self.t_end > self.t_start:
            raise ConfigError(f"empty window [{self.t_start}, {self.t_end}]")

    @property
    def tau(self):
        return (self.t_end - self.t_start) / self.B

    @property
    def centers(self):
        return self.t_start + (np.arange(self.B) + 0.5) * self.tau

    def index(self, t):
        """Zero-based bin of each timestamp; the closing edge belongs to the last bin."""
        b = np.floor((np.asarray(t, dtype=np.float64) - self.t_start) / self.tau).astype(np.int64)
        return np.clip(b, 0, self.B - 1)

    @classmethod
    def for_stream(cls, stream, B=DEFAULT_BINS):
        return cls(stream.t_start, stream.t_end, B)


@dataclass(frozen=True)
class VoxelGrid:
    values: np.ndarray  # (B, H, W)
    bins: BinGrid


def build_voxel_grid(stream, B=DEFAULT_BINS, backend=None):
    """Signed trilinear voxel grid of shape (B, H, W).

    Each event deposits ``p * k(x - x_i) k(y - y_i) k((t_i - c_b) / tau)`` with
    ``k(a) = max(0, 1 - |a|)``. Mass landing outside the sensor or beyond the
    first/last bin centre is dropped.
    """
    if B < 2:
        raise ConfigError(f"voxel grids need at least 2 bins, got {B}")
    bins = BinGrid.for_stream(stream, B)
    u = (stream.t - bins.centers[0]) / bins.tau
    k0 = np.floor(u).astype(np.int64)
    wk = 1.0 - (u - k0)
    n = len(stream)
    vol = kernels.splat(
        (1, B, stream.height, stream.width),
        stream.x.astype(np.float64),
        stream.y.astype(np.float64),
        stream.p.astype(np.float64),
        np.zeros(n, dtype=np.int64),
        k0,
        wk,
        backend=backend,
    )
    return VoxelGrid(vol[0], bins)
