"""Direct coarse-to-fine flow estimation on the curriculum-weighted objective.

Control points start at zero on the coarsest pyramid level and are refined by
gradient descent; between levels the rasters are bilinearly upsampled and
doubled. Pyramid coordinates map fine position ``x`` to ``x / 2`` one level up.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .errors import ConfigError, NonFiniteError
from .events import EventStream
from .losses import LossConfig, Objective, curriculum_weights, endpoint_loss
from .trajectory import BezierFlowField, bilinear_corners

log = logging.getLogger(__name__)

ANCHOR_MODES = ("none", "endpoint-gt")


@dataclass(frozen=True)
class OptimizeConfig:
    """Estimator settings.

    ``step_size`` is the trial displacement (px) of the fastest-moving control
    point at the start of each backtracking line search; ``clip`` caps the
    per-node update norm. ``E_c`` counts optimizer iterations across all
    levels. ``node_spacing`` is the pitch (px) of the control-point lattice;
    1 gives one free control-point pair per pixel.
    """

    pyramid_levels: int = 3
    iters_per_level: int = 30
    step_size: float = 0.5
    E_c: float = 45.0
    anchor_mode: str = "none"
    clip: float = 10.0
    max_backtracks: int = 12
    node_spacing: int = 8
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ConfigError("pyramid_levels must be at least 1")
        if not self.step_size > 0:
            raise ConfigError("step_size must be positive")
        if self.node_spacing < 1:
            raise ConfigError("node_spacing must be at least 1")
        if self.iters_per_level < 0:
            raise ConfigError("iters_per_level must be non-negative")
        if self.anchor_mode not in ANCHOR_MODES:
            raise ConfigError(f"anchor_mode must be one of {ANCHOR_MODES}")


def level_shape(shape, level):
    h, w = shape
    f = 2**level
    return int(math.ceil((h - 1) / f)) + 1, int(math.ceil((w - 1) / f)) + 1


def downsample_stream(stream, level):
    if level == 0:
        return stream
    h, w = level_shape((stream.height, stream.width), level)
    f = 2.0**level
    return EventStream(stream.x / f, stream.y / f, stream.t, stream.p, w, h, stream.t_start, stream.t_end)


def interp_matrix(src_shape, dst_shape, ratio):
    """Sparse bilinear map: destination pixel ``i`` samples the source at ``i * ratio``."""
    hd, wd = dst_shape
    ys, xs = np.mgrid[0:hd, 0:wd]
    idx, wts = bilinear_corners(xs.ravel() * ratio, ys.ravel() * ratio, *src_shape)
    rows = np.repeat(np.arange(hd * wd), 4)
    m = sparse.csr_matrix((wts.ravel(), (rows, idx.ravel())), shape=(hd * wd, src_shape[0] * src_shape[1]))
    m.sum_duplicates()
    return m


def upsample_matrix(src_shape, dst_shape):
    """Bilinear interpolation from one pyramid level to the next finer one."""
    return interp_matrix(src_shape, dst_shape, 0.5)


def restriction_matrix(fine_shape, coarse_shape):
    """Full-weighting average (row-normalized transpose of the upsampler)."""
    up = upsample_matrix(coarse_shape, fine_shape)
    down = up.T.tocsr()
    norm = np.asarray(down.sum(axis=1)).ravel()
    norm[norm == 0] = 1.0
    return sparse.diags(1.0 / norm) @ down


def _apply(mat, raster):
    h = raster.shape[-1]
    return (mat @ raster.reshape(-1, h)).reshape(-1, h)


def downsample_anchors(gt, mask, level):
    """Average valid anchors into the cells of pyramid ``level``; values scaled to that level."""
    if level == 0:
        return gt, mask
    h, w = gt.shape[:2]
    hl, wl = level_shape((h, w), level)
    f = 2**level
    ys, xs = np.nonzero(mask)
    cy = np.rint(ys / f).astype(np.int64)
    cx = np.rint(xs / f).astype(np.int64)
    cell = cy * wl + cx
    cnt = np.bincount(cell, minlength=hl * wl)
    out = np.zeros((hl * wl, 2))
    for c in range(2):
        out[:, c] = np.bincount(cell, weights=gt[ys, xs, c], minlength=hl * wl)
    valid = cnt > 0
    out[valid] /= cnt[valid, None]
    return out.reshape(hl, wl, 2) / f, valid.reshape(hl, wl)


def _flow_term(gt, mask, coarse_op, gamma):
    """Endpoint loss closure; ``coarse_op`` (when given) forms the coarse-scale prediction."""
    if coarse_op is None:

        def term(p2):
            v, (g,) = endpoint_loss([p2], gt, mask, (1.0,))
            return v, g

        return term

    def term(p2):
        coarse = _apply(coarse_op, p2).reshape(p2.shape)
        v, (g1, g2) = endpoint_loss([coarse, p2], gt, mask, gamma)
        back = _apply(coarse_op.T.tocsr(), g1).reshape(p2.shape)
        return v, g2 + back

    return term


def _clip(dp1, dp2, limit):
    norm = np.sqrt(np.sum(dp1**2, axis=-1) + np.sum(dp2**2, axis=-1))
    scale = np.minimum(1.0, limit / np.maximum(norm, 1e-300))[..., None]
    return dp1 * scale, dp2 * scale


def _check_finite(bd, grads):
    for name in ("lsc", "tc", "flow", "total"):
        v = getattr(bd, name)
        if v is not None and not np.isfinite(v):
            raise NonFiniteError(f"non-finite {name} loss ({v})")
    for name, g in zip(("p1", "p2"), grads):
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient w.r.t. {name}")


def node_shape(shape, spacing):
    h, w = shape
    return int(math.ceil((h - 1) / spacing)) + 1, int(math.ceil((w - 1) / spacing)) + 1


def estimate_flow(stream, cfg=OptimizeConfig(), gt_endpoint=None, gt_mask=None, backend=None):
    """Estimate a Bezier flow field from events.

    The unknowns are control points on a node lattice of pitch
    ``cfg.node_spacing`` (full-resolution px); every pyramid level reads its
    control-point rasters from the lattice by bilinear interpolation, scaled to
    that level's pixel size. Levels run coarsest first, starting from zero.

    Returns the full-resolution field and one :class:`LossBreakdown` per
    iteration. With ``anchor_mode="endpoint-gt"`` the curriculum starts from the
    supplied sparse endpoint anchors; with ``"none"`` it runs at its
    self-supervised end.
    """
    anchored = cfg.anchor_mode == "endpoint-gt"
    shape = (stream.height, stream.width)
    if anchored:
        if gt_endpoint is None:
            raise ConfigError("anchor_mode 'endpoint-gt' needs gt_endpoint")
        gt_endpoint = np.asarray(gt_endpoint, dtype=np.float64)
        if gt_endpoint.shape != shape + (2,):
            raise ConfigError(f"anchor raster {gt_endpoint.shape} does not match the sensor {shape + (2,)}")
        finite = np.all(np.isfinite(gt_endpoint), axis=-1)
        gt_mask = finite if gt_mask is None else np.asarray(gt_mask, bool) & finite
        gt_endpoint = np.where(gt_mask[..., None], gt_endpoint, 0.0)
        if not gt_mask.any():
            raise ConfigError("anchor mask is empty")
    lcfg = replace(cfg.loss, E_c=cfg.E_c)
    # without anchors the curriculum is entered at its self-supervised end
    e_offset = 0.0 if anchored else float(cfg.E_c)

    nodes = node_shape(shape, cfg.node_spacing)
    theta1 = np.zeros(nodes + (2,))
    theta2 = np.zeros(nodes + (2,))
    history = []
    it = 0
    for level in range(cfg.pyramid_levels - 1, -1, -1):
        f = 2.0**level
        lshape = level_shape(shape, level)
        M = interp_matrix(nodes, lshape, f / cfg.node_spacing)
        Mt = M.T.tocsr()

        def to_field(t1, t2):
            p1 = _apply(M, t1).reshape(lshape + (2,)) / f
            p2 = _apply(M, t2).reshape(lshape + (2,)) / f
            return BezierFlowField(p1, p2, stream.t_start, stream.t_end)

        sub = downsample_stream(stream, level)
        obj = Objective(sub, to_field(theta1, theta2), lcfg, backend=backend)
        flow_term = None
        if anchored:
            g_l, m_l = downsample_anchors(gt_endpoint, gt_mask, level)
            coarse_op = None
            if level == 0 and cfg.pyramid_levels > 1:
                cshape = level_shape(shape, 1)
                coarse_op = upsample_matrix(cshape, shape) @ restriction_matrix(shape, cshape)
            flow_term = _flow_term(g_l, m_l, coarse_op, lcfg.gamma)

        def evaluate(t1, t2, e):
            term = flow_term if curriculum_weights(e, cfg.E_c)[0] > 0 else None
            bd, (d1, d2) = obj.evaluate(to_field(t1, t2), e, term)
            return bd, (_apply(Mt, d1).reshape(t1.shape) / f, _apply(Mt, d2).reshape(t2.shape) / f)

        for _ in range(cfg.iters_per_level):
            e = it + e_offset
            bd, (g1, g2) = evaluate(theta1, theta2, e)
            _check_finite(bd, (g1, g2))
            gmax = max(np.abs(g1).max(), np.abs(g2).max())
            if gmax > 0:
                alpha = cfg.step_size / gmax
                slope = float(np.sum(g1 * g1) + np.sum(g2 * g2))
                for _ in range(cfg.max_backtracks):
                    d1, d2 = _clip(-alpha * g1, -alpha * g2, cfg.clip)
                    tb, _ = evaluate(theta1 + d1, theta2 + d2, e)
                    if tb.total <= bd.total - 1e-4 * alpha * slope:
                        theta1, theta2 = theta1 + d1, theta2 + d2
                        break
                    alpha *= 0.5
            history.append(bd)
            log.debug("level %d iter %d total %.6g", level, it, bd.total)
            it += 1
    M = interp_matrix(nodes, shape, 1.0 / cfg.node_spacing)
    p1 = _apply(M, theta1).reshape(shape + (2,))
    p2 = _apply(M, theta2).reshape(shape + (2,))
    return BezierFlowField(p1, p2, stream.t_start, stream.t_end), history


def grid_search_oracle(stream, candidates, cfg=LossConfig(), backend=None):
    """Exhaustive ``0.5 * LSC + 0.5 * TC`` over candidate fields.

    Returns ``(index of the minimum, scores)``; ties resolve to the lowest index.
    """
    if len(candidates) < 2:
        raise ConfigError("grid search needs at least two candidates")
    obj = Objective(stream, candidates[0], cfg, backend=backend)
    scores = []
    for cand in candidates:
        lsc, tc, _, _ = obj.self_supervised(cand)
        scores.append(0.5 * lsc + 0.5 * tc)
    scores = np.array(scores)
    return int(np.argmin(scores)), scores


def write_loss_log(history, path):
    """One JSON object per iteration."""
    with open(path, "w", encoding="utf-8") as fh:
        for bd in history:
            fh.write(bd.to_json() + "\n")
