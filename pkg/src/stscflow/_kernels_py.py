"""Pure-numpy splatting kernels.

Reference implementation of the compiled kernels in ``_kernels.pyx``. Both
expose the same two functions and are selected in :mod:`stscflow.kernels`.

Every event deposits ``w`` into a (bin, sample, y, x) volume through a
bilinear spatial footprint and a two-tap temporal footprint: weight ``wk``
on sample ``k0`` and ``1 - wk`` on ``k0 + 1``. Taps falling outside the
volume are dropped.
"""

import numpy as np


def _taps(qx, qy, k0, wk, shape):
    B, K, H, W = shape
    x0 = np.floor(qx).astype(np.int64)
    y0 = np.floor(qy).astype(np.int64)
    fx = qx - x0
    fy = qy - y0
    for dk, tw in ((0, wk), (1, 1.0 - wk)):
        kk = k0 + dk
        for dy, wy, sy in ((0, 1.0 - fy, -1.0), (1, fy, 1.0)):
            yy = y0 + dy
            for dx, wx, sx in ((0, 1.0 - fx, -1.0), (1, fx, 1.0)):
                xx = x0 + dx
                ok = (kk >= 0) & (kk < K) & (yy >= 0) & (yy < H) & (xx >= 0) & (xx < W)
                yield kk, yy, xx, ok, tw, wx, wy, sx, sy


def splat(out, qx, qy, w, b, k0, wk):
    """Accumulate event weights into ``out`` of shape (B, K, H, W) in place."""
    shape = out.shape
    flat = out.reshape(-1)
    B, K, H, W = shape
    for kk, yy, xx, ok, tw, wx, wy, _, _ in _taps(qx, qy, k0, wk, shape):
        idx = ((b[ok] * K + kk[ok]) * H + yy[ok]) * W + xx[ok]
        val = (w * tw * wx * wy)[ok]
        flat += np.bincount(idx, weights=val, minlength=flat.size)
    return out


def splat_grad(grad, qx, qy, w, b, k0, wk):
    """Pull back ``grad`` (dL/d volume) to per-event position gradients.

    Returns ``(gx, gy)``, the derivatives of ``sum(grad * splat(...))`` with
    respect to ``qx`` and ``qy``.
    """
    shape = grad.shape
    flat = grad.reshape(-1)
    B, K, H, W = shape
    gx = np.zeros(qx.shape[0])
    gy = np.zeros(qx.shape[0])
    for kk, yy, xx, ok, tw, wx, wy, sx, sy in _taps(qx, qy, k0, wk, shape):
        idx = ((b[ok] * K + kk[ok]) * H + yy[ok]) * W + xx[ok]
        g = flat[idx] * (w * tw)[ok]
        gx[ok] += g * sx * wy[ok]
        gy[ok] += g * sy * wx[ok]
    return gx, gy
