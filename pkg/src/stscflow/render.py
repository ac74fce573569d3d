"""Flow colour coding on the standard optical-flow colour wheel."""

from __future__ import annotations

import numpy as np

from .trajectory import bezier_basis
from .errors import DomainError


def color_wheel():
    """(55, 3) RGB wheel: red-yellow-green-cyan-blue-magenta segments of 15/6/4/11/13/6 steps."""
    segments = [(15, (255, 0, 0), (255, 255, 0)), (6, (255, 255, 0), (0, 255, 0)), (4, (0, 255, 0), (0, 255, 255)),
                (11, (0, 255, 255), (0, 0, 255)), (13, (0, 0, 255), (255, 0, 255)), (6, (255, 0, 255), (255, 0, 0))]
    rows = []
    for n, a, b in segments:
        frac = np.arange(n)[:, None] / n
        rows.append(np.asarray(a) + frac * (np.asarray(b) - np.asarray(a)))
    return np.concatenate(rows)


def flow_to_rgb(flow, max_mag=None):
    """uint8 (H, W, 3) image; white means no motion, saturation grows with magnitude."""
    flow = np.asarray(flow, dtype=np.float64)
    u, v = flow[..., 0], flow[..., 1]
    mag = np.hypot(u, v)
    if max_mag is None:
        max_mag = float(np.percentile(mag, 99)) if mag.size else 0.0
    rad = np.clip(mag / max_mag, 0.0, 1.0) if max_mag > 0 else np.zeros_like(mag)
    wheel = color_wheel()
    n = wheel.shape[0]
    ang = np.arctan2(-v, -u) / np.pi  # in [-1, 1]
    fk = (ang + 1.0) / 2.0 * (n - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % n
    f = (fk - k0)[..., None]
    col = ((1 - f) * wheel[k0] + f * wheel[k1]) / 255.0
    col = 1.0 - rad[..., None] * (1.0 - col)
    return np.round(255.0 * col).astype(np.uint8)


def render_field(fld, s=1.0, max_mag=None):
    """Colour-coded displacement ``D(s)`` of every pixel's trajectory."""
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"normalized time must lie in [0, 1], got {s}")
    a, b = bezier_basis(s)
    return flow_to_rgb(a * fld.p1 + b * fld.p2, max_mag)


def save_png(path, rgb):
    from PIL import Image

    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8)).save(path)
