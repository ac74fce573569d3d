# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled splatting kernels. Same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def splat(double[:, :, :, ::1] out,
          const double[::1] qx, const double[::1] qy, const double[::1] w,
          const cnp.int64_t[::1] b, const cnp.int64_t[::1] k0, const double[::1] wk):
    cdef Py_ssize_t n, N = qx.shape[0]
    cdef Py_ssize_t K = out.shape[1], H = out.shape[2], W = out.shape[3]
    cdef Py_ssize_t xi, yi, kk, dk, dx, dy, bb
    cdef double fx, fy, tw, wy, wx, wn
    with nogil:
        for n in range(N):
            wn = w[n]
            if wn == 0.0:
                continue
            bb = b[n]
            xi = <Py_ssize_t>floor(qx[n])
            yi = <Py_ssize_t>floor(qy[n])
            fx = qx[n] - xi
            fy = qy[n] - yi
            for dk in range(2):
                kk = k0[n] + dk
                if kk < 0 or kk >= K:
                    continue
                tw = wk[n] if dk == 0 else 1.0 - wk[n]
                for dy in range(2):
                    if yi + dy < 0 or yi + dy >= H:
                        continue
                    wy = 1.0 - fy if dy == 0 else fy
                    for dx in range(2):
                        if xi + dx < 0 or xi + dx >= W:
                            continue
                        wx = 1.0 - fx if dx == 0 else fx
                        out[bb, kk, yi + dy, xi + dx] += wn * tw * wy * wx
    return np.asarray(out)


def splat_grad(const double[:, :, :, ::1] grad,
               const double[::1] qx, const double[::1] qy, const double[::1] w,
               const cnp.int64_t[::1] b, const cnp.int64_t[::1] k0, const double[::1] wk):
    cdef Py_ssize_t n, N = qx.shape[0]
    cdef Py_ssize_t K = grad.shape[1], H = grad.shape[2], W = grad.shape[3]
    cdef Py_ssize_t xi, yi, kk, dk, dx, dy, bb
    cdef double fx, fy, tw, wy, wx, sx, sy, g, ax, ay
    gx_arr = np.zeros(N)
    gy_arr = np.zeros(N)
    cdef double[::1] gx = gx_arr
    cdef double[::1] gy = gy_arr
    with nogil:
        for n in range(N):
            if w[n] == 0.0:
                continue
            bb = b[n]
            xi = <Py_ssize_t>floor(qx[n])
            yi = <Py_ssize_t>floor(qy[n])
            fx = qx[n] - xi
            fy = qy[n] - yi
            ax = 0.0
            ay = 0.0
            for dk in range(2):
                kk = k0[n] + dk
                if kk < 0 or kk >= K:
                    continue
                tw = wk[n] if dk == 0 else 1.0 - wk[n]
                for dy in range(2):
                    if yi + dy < 0 or yi + dy >= H:
                        continue
                    wy = 1.0 - fy if dy == 0 else fy
                    sy = -1.0 if dy == 0 else 1.0
                    for dx in range(2):
                        if xi + dx < 0 or xi + dx >= W:
                            continue
                        wx = 1.0 - fx if dx == 0 else fx
                        sx = -1.0 if dx == 0 else 1.0
                        g = grad[bb, kk, yi + dy, xi + dx] * w[n] * tw
                        ax += g * sx * wy
                        ay += g * sy * wx
            gx[n] = ax
            gy[n] = ay
    return gx_arr, gy_arr
