"""Event streams: data model, CSV / EVS1 file I/O, and a synthetic scene generator."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ParseError, ValidationError
from .trajectory import BezierFlowField, bezier_basis

WINDOW = 0.1  # seconds; every generated scene spans one 100 ms window

_MAGIC = b"EVS1"
_HEADER = struct.Struct("<4sIIQ")
_RECORD = np.dtype([("t", "<f8"), ("x", "<f4"), ("y", "<f4"), ("p", "i1")])


@dataclass(frozen=True)
class Event:
    x: float
    y: float
    t: float
    polarity: int


@dataclass(frozen=True)
class EventStream:
    """Column-oriented event storage.

    ``x``/``y`` are float32 (the precision of the binary format), ``t`` is
    float64 seconds, ``p`` is int8 in {-1, +1}.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    width: int
    height: int
    t_start: float
    t_end: float

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float32)
        y = np.ascontiguousarray(self.y, dtype=np.float32)
        t = np.ascontiguousarray(self.t, dtype=np.float64)
        p = np.ascontiguousarray(self.p, dtype=np.int8)
        if not (x.shape == y.shape == t.shape == p.shape) or x.ndim != 1:
            raise ValidationError("event columns must be 1-D and of equal length")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"invalid sensor size {self.width}x{self.height}")
        if self.t_end < self.t_start:
            raise ValidationError(f"window end {self.t_end} precedes start {self.t_start}")
        if t.size:
            if np.any(np.diff(t) < 0):
                i = int(np.argmax(np.diff(t) < 0)) + 1
                raise ValidationError(f"timestamps decrease at event {i} ({t[i - 1]} -> {t[i]})")
            if t[0] < self.t_start or t[-1] > self.t_end:
                raise ValidationError(f"timestamps outside window [{self.t_start}, {self.t_end}]")
            bad = (x < 0) | (x >= self.width) | (y < 0) | (y >= self.height)
            if np.any(bad):
                i = int(np.argmax(bad))
                raise ValidationError(f"event {i} at ({x[i]}, {y[i]}) outside the {self.width}x{self.height} sensor")
            if np.any((p != 1) & (p != -1)):
                raise ValidationError("polarity must be -1 or +1")
        for name, val in (("x", x), ("y", y), ("t", t), ("p", p)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    def __len__(self):
        return int(self.t.size)

    def __getitem__(self, i):
        return Event(float(self.x[i]), float(self.y[i]), float(self.t[i]), int(self.p[i]))

    @property
    def duration(self):
        return self.t_end - self.t_start

    @classmethod
    def from_events(cls, events, width, height, t_start=None, t_end=None):
        events = list(events)
        t = np.array([e.t for e in events], dtype=np.float64)
        return cls(
            np.array([e.x for e in events]),
            np.array([e.y for e in events]),
            t,
            np.array([e.polarity for e in events]),
            width,
            height,
            _default(t_start, t, min),
            _default(t_end, t, max),
        )

    def select(self, mask):
        """Sub-stream of the events where ``mask`` holds, same window."""
        return EventStream(self.x[mask], self.y[mask], self.t[mask], self.p[mask], self.width, self.height, self.t_start, self.t_end)

    def with_window(self, t_start, t_end):
        return EventStream(self.x, self.y, self.t, self.p, self.width, self.height, t_start, t_end)

    def merge(self, other):
        if (self.width, self.height) != (other.width, other.height):
            raise ValidationError("cannot merge streams from different sensor sizes")
        t = np.concatenate([self.t, other.t])
        order = np.argsort(t, kind="stable")
        cat = lambda a, b: np.concatenate([a, b])[order]  # noqa: E731
        return EventStream(
            cat(self.x, other.x), cat(self.y, other.y), t[order], cat(self.p, other.p),
            self.width, self.height, min(self.t_start, other.t_start), max(self.t_end, other.t_end),
        )


def _default(value, t, fn):
    if value is not None:
        return float(value)
    return float(fn(t)) if t.size else 0.0


# -- file I/O ---------------------------------------------------------------


def save_events(stream, path, format="binary"):
    path = Path(path)
    if format == "binary":
        rec = np.empty(len(stream), dtype=_RECORD)
        rec["t"], rec["x"], rec["y"], rec["p"] = stream.t, stream.x, stream.y, stream.p
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, stream.width, stream.height, len(stream)))
            fh.write(rec.tobytes())
    elif format == "csv":
        with open(path, "w") as fh:
            fh.write("t,x,y,p\n")
            for t, x, y, p in zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist()):
                fh.write(f"{t!r},{_num(x)},{_num(y)},{p}\n")
    else:
        raise ConfigError(f"unknown event format {format!r}")


def _num(v):
    return str(int(v)) if float(v).is_integer() else repr(v)


def load_events(path, format=None, width=None, height=None, t_start=None, t_end=None):
    """Read an event file.

    ``format`` is ``"csv"`` or ``"binary"``; when omitted it is inferred from the
    extension. CSV files carry no sensor size, so ``width`` and ``height`` are
    required for them. The window defaults to the first and last timestamps.
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() in (".csv", ".txt") else "binary"
    if format == "binary":
        x, y, t, p, w, h = _read_binary(path)
        width = w if width is None else width
        height = h if height is None else height
    elif format == "csv":
        if width is None or height is None:
            raise ConfigError("CSV event files need an explicit width and height")
        x, y, t, p = _read_csv(path)
    else:
        raise ConfigError(f"unknown event format {format!r}")
    return EventStream(x, y, t, p, int(width), int(height), _default(t_start, t, min), _default(t_end, t, max))


def _read_binary(path):
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, width, height, count = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r} at offset 0")
    expected = _HEADER.size + count * _RECORD.itemsize
    if len(raw) != expected:
        raise ParseError(f"{path}: payload ends at offset {len(raw)}, header declares {count} records ({expected} bytes)")
    rec = np.frombuffer(raw, dtype=_RECORD, count=count, offset=_HEADER.size)
    return rec["x"].copy(), rec["y"].copy(), rec["t"].copy(), rec["p"].copy(), width, height


def _read_csv(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1 and line.replace(" ", "").lower() == "t,x,y,p":
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields t,x,y,p, got {len(parts)}")
            try:
                t, x, y = float(parts[0]), float(parts[1]), float(parts[2])
                p = int(parts[3])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if p not in (-1, 1):
                raise ParseError(f"{path}:{lineno}: polarity must be -1 or 1, got {p}")
            rows.append((t, x, y, p))
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return arr[:, 1], arr[:, 2], arr[:, 0], arr[:, 3].astype(np.int8)


# -- synthetic scenes -------------------------------------------------------

PATTERNS = ("vertical-edge", "checkerboard", "random-texture")


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Scene description for :func:`generate_synthetic`.

    ``p1`` / ``p2`` are either a 2-vector (global motion) or (H, W, 2) rasters.
    ``contrast`` is the log-intensity swing of the pattern.
    """

    pattern: str = "checkerboard"
    p1: object = (2.0, 0.0)
    p2: object = (4.0, 0.0)
    width: int = 64
    height: int = 64
    contrast_threshold: float = 0.15
    seed: int = 0
    contrast: float = 1.0
    square: float = 8.0
    t_start: float = 0.0

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ConfigError(f"unknown pattern {self.pattern!r}; choose from {PATTERNS}")
        if not self.contrast_threshold > 0:
            raise ConfigError("contrast_threshold must be positive")

    def flow_field(self):
        h, w = self.height, self.width
        p1 = np.broadcast_to(np.asarray(self.p1, dtype=np.float64), (h, w, 2)).copy()
        p2 = np.broadcast_to(np.asarray(self.p2, dtype=np.float64), (h, w, 2)).copy()
        return BezierFlowField(p1, p2, self.t_start, self.t_start + WINDOW)


def _pattern(spec):
    """Log-intensity function ``f(x, y)`` of the scene at its initial position."""
    rng = np.random.default_rng(spec.seed)
    amp = spec.contrast
    offset = 0.37 * spec.contrast_threshold  # keeps static pixels off the threshold levels
    if spec.pattern == "vertical-edge":
        edge = spec.width / 3.0 + 0.5
        return lambda x, y: offset + amp * 0.5 * (1.0 + np.tanh((x - edge) / 0.15))
    if spec.pattern == "checkerboard":
        ph = rng.uniform(0, spec.square, size=2)
        k = np.pi / spec.square
        sharp = 4.0
        return lambda x, y: offset + amp * 0.5 * (
            1.0 + np.tanh(sharp * np.sin(k * (x + ph[0]))) * np.tanh(sharp * np.sin(k * (y + ph[1]))) / np.tanh(sharp) ** 2
        )
    pad = 32
    noise = rng.standard_normal((spec.height + 2 * pad, spec.width + 2 * pad))
    tex = ndimage.gaussian_filter(noise, 2.0, mode="wrap")
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    coeffs = ndimage.spline_filter(tex, order=3, mode="mirror")

    def texture(x, y):
        coords = np.stack([np.asarray(y, float) + pad, np.asarray(x, float) + pad])
        return offset + amp * ndimage.map_coordinates(coeffs, coords, order=3, mode="mirror", prefilter=False)

    return texture


def generate_synthetic(spec):
    """Render an ideal-sensor event stream for a scene translating along Bezier motion.

    Pixel ``q`` observes the pattern at ``q - D(q, s)``; an event fires at every
    crossing of a multiple of the contrast threshold, timestamped at the exact
    crossing time (bisection on the continuous signal). Returns the stream and
    the generating flow field.
    """
    gt = spec.flow_field()
    h, w = spec.height, spec.width
    f = _pattern(spec)
    c = spec.contrast_threshold
    t0 = spec.t_start

    ys, xs = np.mgrid[0:h, 0:w]
    px = xs.ravel().astype(np.float64)
    py = ys.ravel().astype(np.float64)
    p1 = gt.p1.reshape(-1, 2)
    p2 = gt.p2.reshape(-1, 2)

    def log_intensity(idx, s):
        a, b = bezier_basis(s)
        dx = a * p1[idx, 0] + b * p2[idx, 0]
        dy = a * p1[idx, 1] + b * p2[idx, 1]
        return f(px[idx] - dx, py[idx] - dy)

    speed = 2.0 * (np.abs(p1).max() + np.abs(p2).max()) if p1.size else 0.0
    steps = max(100, int(np.ceil(speed / 0.02)))
    s_grid = np.linspace(0.0, 1.0, steps + 1)
    every = np.arange(px.size)

    pix_l, lvl_l, step_l, pol_l = [], [], [], []
    prev_level = np.floor(log_intensity(every, np.zeros(px.size)) / c)
    for j in range(1, steps + 1):
        level = np.floor(log_intensity(every, np.full(px.size, s_grid[j])) / c)
        jump = (level - prev_level).astype(np.int64)
        moved = np.nonzero(jump)[0]
        if moved.size:
            n = np.abs(jump[moved])
            rep = np.repeat(moved, n)
            # k-th crossed level: lo+k for rising, lo-k+1 for falling (k = 1..n)
            k = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n) + 1
            sign = np.sign(jump[rep])
            lvl = np.where(sign > 0, prev_level[rep] + k, prev_level[rep] - k + 1)
            pix_l.append(rep)
            lvl_l.append(lvl * c)
            step_l.append(np.full(rep.size, j))
            pol_l.append(sign.astype(np.int8))
        prev_level = level

    if not pix_l:
        empty = np.zeros(0)
        return EventStream(empty, empty, empty, empty.astype(np.int8), w, h, t0, t0 + WINDOW), gt

    pix = np.concatenate(pix_l)
    target = np.concatenate(lvl_l)
    j = np.concatenate(step_l)
    pol = np.concatenate(pol_l)
    lo = s_grid[j - 1].copy()
    hi = s_grid[j].copy()
    # the signal at ``lo`` sits on the starting side of the level for pol=+1 (below) / -1 (above)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        val = log_intensity(pix, mid)
        before = np.where(pol > 0, val < target, val >= target)
        lo = np.where(before, mid, lo)
        hi = np.where(before, hi, mid)
    s_evt = 0.5 * (lo + hi)
    t_evt = t0 + s_evt * WINDOW
    order = np.lexsort((px[pix], py[pix], t_evt))
    stream = EventStream(px[pix][order], py[pix][order], t_evt[order], pol[order], w, h, t0, t0 + WINDOW)
    return stream, gt
