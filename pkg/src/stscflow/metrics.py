"""Flow accuracy metrics and the flow-warp-loss (FWL) sharpness ratio."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError
from .trajectory import BezierFlowField
from .vwe import WarpPlan

DEFAULT_RATES = (10, 50, 100, 150)
MIN_EVENTS = 10


def _prepare(pred, gt, mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ConfigError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    if pred.ndim < 1 or pred.shape[-1] != 2:
        raise ConfigError(f"flow rasters need a trailing axis of size 2, got {pred.shape}")
    if mask is None:
        mask = np.all(np.isfinite(gt), axis=-1)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != gt.shape[:-1]:
            raise ConfigError(f"mask shape {mask.shape} does not match flow shape {gt.shape[:-1]}")
    if not mask.any():
        raise ConfigError("evaluation mask is empty")
    return pred[mask], gt[mask]


def _errors(pred, gt, mask):
    p, g = _prepare(pred, gt, mask)
    return np.linalg.norm(p - g, axis=-1), g


def epe(pred, gt, mask=None):
    """Mean endpoint error (px) over the mask."""
    err, _ = _errors(pred, gt, mask)
    return float(err.mean())


def npe(pred, gt, mask=None, thresholds=(1, 2, 3)):
    """Percentage of pixels whose endpoint error strictly exceeds each threshold."""
    err, _ = _errors(pred, gt, mask)
    return tuple(100.0 * float(np.mean(err > k)) for k in thresholds)


def angular_error(pred, gt, mask=None):
    """Mean angle (degrees) between the space-time vectors (u, v, 1)."""
    p, g = _prepare(pred, gt, mask)
    num = np.sum(p * g, axis=-1) + 1.0
    den = np.sqrt((np.sum(p * p, axis=-1) + 1.0) * (np.sum(g * g, axis=-1) + 1.0))
    return float(np.degrees(np.arccos(np.clip(num / den, -1.0, 1.0))).mean())


def pct_out(pred, gt, mask=None):
    """Percentage of outliers: error above 3 px or above 5% of the true magnitude."""
    err, g = _errors(pred, gt, mask)
    out = (err > 3.0) | (err > 0.05 * np.linalg.norm(g, axis=-1))
    return 100.0 * float(out.mean())


def _iwe_counts(plan, fld):
    return plan.splat(fld, signed=False)[0, 0]


def fwl(stream, fld, rate):
    """Flow warp loss at ``rate`` Hz.

    The window is cut into ``floor(duration * rate)`` sub-intervals of length
    ``1 / rate``. In each, the events are warped to the sub-interval start along
    ``fld`` and along zero flow; the ratio of the two event-count image
    variances (over pixels reached by either image) is averaged over
    sub-intervals holding at least 10 events. Two flat images count as a
    ratio of 1; a flat zero-flow image against a textured one is undefined
    and skipped.
    """
    if not rate > 0:
        raise ConfigError(f"rate must be positive, got {rate}")
    if (fld.t_start, fld.t_end) != (stream.t_start, stream.t_end):
        raise ConfigError("flow field and event stream cover different windows")
    n_sub = int(np.floor(stream.duration * rate + 1e-9))
    if n_sub < 1:
        raise ConfigError(f"a {stream.duration} s window holds no full sub-interval at {rate} Hz")
    zero = BezierFlowField.zeros(*fld.shape, fld.t_start, fld.t_end)
    ratios = []
    for j in range(n_sub):
        lo = stream.t_start + j / rate
        hi = stream.t_start + (j + 1) / rate
        sel = (stream.t >= lo) & ((stream.t < hi) if j < n_sub - 1 else (stream.t <= hi))
        if sel.sum() < MIN_EVENTS:
            continue
        plan = WarpPlan.for_iwe(stream.select(sel), fld, lo)
        warped = _iwe_counts(plan, fld)
        still = _iwe_counts(plan, zero)
        support = (warped != 0) | (still != 0)
        num, den = warped[support].var(), still[support].var()
        if den == 0:
            if num == 0:
                ratios.append(1.0)
            continue
        ratios.append(num / den)
    if not ratios:
        raise DomainError(f"no sub-interval at {rate} Hz holds {MIN_EVENTS} or more events with a defined ratio")
    return float(np.mean(ratios))


@dataclass
class MetricsReport:
    epe: float
    npe1: float
    npe2: float
    npe3: float
    ae: float
    pct_out: float
    fwl_by_rate: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "epe": self.epe,
            "npe1": self.npe1,
            "npe2": self.npe2,
            "npe3": self.npe3,
            "ae": self.ae,
            "pct_out": self.pct_out,
            "fwl_by_rate": {str(k): v for k, v in self.fwl_by_rate.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def table(self):
        rows = [
            ("EPE (px)", self.epe),
            ("NPE@1 (%)", self.npe1),
            ("NPE@2 (%)", self.npe2),
            ("NPE@3 (%)", self.npe3),
            ("AE (deg)", self.ae),
            ("%Out", self.pct_out),
        ]
        rows += [(f"FWL @ {k:g} Hz", v) for k, v in self.fwl_by_rate.items()]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value:10.4f}" for name, value in rows)


def evaluate(pred, gt, mask=None, stream=None, rates=DEFAULT_RATES):
    """Full report. ``pred`` / ``gt`` are fields or (H, W, 2) endpoint rasters;
    FWL needs ``stream`` and a :class:`BezierFlowField` prediction."""
    pf = pred if isinstance(pred, BezierFlowField) else None
    p = pred.endpoint if pf is not None else pred
    g = gt.endpoint if isinstance(gt, BezierFlowField) else gt
    n1, n2, n3 = npe(p, g, mask)
    fw = {}
    if stream is not None:
        if pf is None:
            raise ConfigError("FWL needs the predicted trajectory field, not just endpoints")
        fw = {r: fwl(stream, pf, r) for r in rates}
    return MetricsReport(epe(p, g, mask), n1, n2, n3, angular_error(p, g, mask), pct_out(p, g, mask), fw)
