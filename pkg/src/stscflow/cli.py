"""``stscflow`` command-line tool.

Every subcommand also reads an optional ``--config`` file of ``key = value``
lines (``#`` starts a comment); explicit flags override config entries.
Exit status: 0 on success, 1 on runtime failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .errors import STSCError
from .events import PATTERNS, WINDOW, SyntheticSceneSpec, generate_synthetic, load_events, save_events
from .losses import LossConfig
from .metrics import DEFAULT_RATES, evaluate
from .optimize import OptimizeConfig, estimate_flow, write_loss_log
from .raster import read_raster, write_raster
from .render import render_field, save_png
from .trajectory import BezierFlowField
from .voxel import DEFAULT_BINS, BinGrid, build_voxel_grid
from .vwe import DEFAULT_K, build_vwe, default_xi_samples

log = logging.getLogger("stscflow")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _pair(text):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from None
    return a, b


def _rates(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated rates, got {text!r}") from None


def read_config(path):
    """Parse ``key = value`` lines; keys are normalized to underscores."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected 'key = value', got {raw.strip()!r}")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


# name -> (type, default) for options that a config file may supply
_OPTIONS = {
    "pattern": (str, "checkerboard"),
    "flow": (_pair, (4.0, 0.0)),
    "p1": (_pair, None),
    "width": (int, None),
    "height": (int, None),
    "threshold": (float, 0.15),
    "seed": (int, 0),
    "t_start": (float, 0.0),
    "t_end": (float, None),
    "bins": (int, DEFAULT_BINS),
    "samples": (int, DEFAULT_K),
    "t0": (float, None),
    "levels": (int, OptimizeConfig.pyramid_levels),
    "iters": (int, OptimizeConfig.iters_per_level),
    "step_size": (float, OptimizeConfig.step_size),
    "curriculum": (float, OptimizeConfig.E_c),
    "node_spacing": (int, OptimizeConfig.node_spacing),
    "rates": (_rates, DEFAULT_RATES),
    "time": (float, 1.0),
}


def _resolve(args):
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    for name, (conv, default) in _OPTIONS.items():
        if not hasattr(args, name):
            continue
        if getattr(args, name) is not None:
            continue
        if name in cfg:
            try:
                setattr(args, name, conv(cfg[name]))
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config entry {name}: {exc}") from None
        else:
            setattr(args, name, default)
    return args


def _window(args):
    t_end = args.t_end if args.t_end is not None else args.t_start + WINDOW
    return args.t_start, t_end


def _load_stream(args):
    t_start, t_end = _window(args)
    return load_events(args.events, width=args.width, height=args.height, t_start=t_start, t_end=t_end)


def cmd_generate(args):
    p2 = args.flow
    p1 = args.p1 if args.p1 is not None else (p2[0] / 2.0, p2[1] / 2.0)
    spec = SyntheticSceneSpec(
        pattern=args.pattern, p1=p1, p2=p2, width=args.width or 64, height=args.height or 64,
        contrast_threshold=args.threshold, seed=args.seed, t_start=args.t_start,
    )
    stream, gt = generate_synthetic(spec)
    save_events(stream, args.out, format=args.format)
    if args.gt:
        write_raster(args.gt, gt.to_raster())
    log.info("wrote %d events to %s", len(stream), args.out)
    return 0


def cmd_voxel(args):
    stream = _load_stream(args)
    grid = build_voxel_grid(stream, args.bins)
    write_raster(args.out, np.moveaxis(grid.values, 0, -1))
    return 0


def _read_field(path, t_start, t_end):
    return BezierFlowField.from_raster(read_raster(path), t_start, t_end)


def cmd_vwe(args):
    stream = _load_stream(args)
    fld = _read_field(args.flow_field, stream.t_start, stream.t_end)
    bins = BinGrid(stream.t_start, stream.t_end, args.bins)
    vol = build_vwe(stream, fld, bins, args.t0, default_xi_samples(bins, args.samples), keep_per_bin=False)
    write_raster(args.out, np.moveaxis(vol.slices, 0, -1))
    return 0


def cmd_estimate(args):
    stream = _load_stream(args)
    anchors = mask = None
    mode = "none"
    if args.anchors:
        raw = read_raster(args.anchors)
        if raw.shape[-1] not in (2, 4):
            raise UsageError(f"anchor raster needs 2 or 4 channels, got {raw.shape[-1]}")
        anchors = raw[..., -2:]
        mask = np.all(np.isfinite(anchors), axis=-1)
        mode = "endpoint-gt"
    cfg = OptimizeConfig(
        pyramid_levels=args.levels, iters_per_level=args.iters, step_size=args.step_size,
        E_c=args.curriculum, anchor_mode=mode, node_spacing=args.node_spacing,
        loss=LossConfig(B=args.bins, K=args.samples),
    )
    fld, history = estimate_flow(stream, cfg, anchors, mask)
    write_raster(args.out, fld.to_raster())
    if args.log:
        write_loss_log(history, args.log)
    if history:
        log.info("final loss %s", history[-1].to_json())
    return 0


def cmd_eval(args):
    pred = read_raster(args.pred)
    gt = read_raster(args.gt)
    if pred.shape != gt.shape:
        raise STSCError(f"prediction raster {pred.shape} and ground-truth raster {gt.shape} differ in shape")
    stream = None
    if args.events:
        args.height, args.width = pred.shape[:2]
        stream = _load_stream(args)
    if pred.shape[-1] == 4:
        pf = BezierFlowField.from_raster(pred, *_window(args))
        gf = BezierFlowField.from_raster(gt, *_window(args))
        report = evaluate(pf, gf, stream=stream, rates=args.rates)
    else:
        if stream is not None:
            raise UsageError("FWL needs a 4-channel trajectory raster as --pred")
        report = evaluate(pred[..., -2:], gt[..., -2:])
    text = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(report.table() if args.table else text)
    return 0


def cmd_render(args):
    fld = _read_field(args.flow_field, 0.0, WINDOW)
    save_png(args.out, render_field(fld, args.time))
    return 0


def build_parser():
    p = _Parser(prog="stscflow", description="Continuous-time event-camera optical flow toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, events=True):
        sp.add_argument("--config", help="key = value file; flags take precedence")
        if events:
            sp.add_argument("--events", required=True, help="EVS1 (.bin) or CSV event file")
            sp.add_argument("--width", type=int)
            sp.add_argument("--height", type=int)
        sp.add_argument("--t-start", dest="t_start", type=float)
        sp.add_argument("--t-end", dest="t_end", type=float)

    g = sub.add_parser("generate", help="render a synthetic scene")
    common(g, events=False)
    g.add_argument("--pattern", choices=PATTERNS)
    g.add_argument("--flow", type=_pair, help="endpoint P2 as 'x,y' px")
    g.add_argument("--p1", type=_pair, help="inner control point (default: straight line)")
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--threshold", type=float, help="contrast threshold")
    g.add_argument("--seed", type=int)
    g.add_argument("--format", choices=("binary", "csv"), default="binary")
    g.add_argument("--out", required=True)
    g.add_argument("--gt", help="ground-truth raster output")
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("voxel", help="build a voxel grid")
    common(v)
    v.add_argument("--bins", type=int)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_voxel)

    w = sub.add_parser("vwe", help="build volumetric warped events")
    common(w)
    w.add_argument("--flow", dest="flow_field", required=True, help="4-channel trajectory raster")
    w.add_argument("--bins", type=int)
    w.add_argument("--samples", type=int)
    w.add_argument("--t0", type=float)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_vwe)

    e = sub.add_parser("estimate", help="estimate a trajectory field")
    common(e)
    e.add_argument("--anchors", help="raster of sparse endpoint anchors (NaN = missing)")
    e.add_argument("--levels", type=int)
    e.add_argument("--iters", type=int)
    e.add_argument("--step-size", dest="step_size", type=float)
    e.add_argument("--curriculum", type=float, help="curriculum length in iterations")
    e.add_argument("--node-spacing", dest="node_spacing", type=int)
    e.add_argument("--bins", type=int)
    e.add_argument("--samples", type=int)
    e.add_argument("--out", required=True)
    e.add_argument("--log", help="JSON-lines loss log")
    e.set_defaults(func=cmd_estimate)

    m = sub.add_parser("eval", help="evaluate a prediction")
    m.add_argument("--config")
    m.add_argument("--pred", required=True)
    m.add_argument("--gt", required=True)
    m.add_argument("--events")
    m.add_argument("--rates", type=_rates)
    m.add_argument("--t-start", dest="t_start", type=float)
    m.add_argument("--t-end", dest="t_end", type=float)
    m.add_argument("--out")
    m.add_argument("--table", action="store_true", help="print an aligned table instead of JSON")
    m.set_defaults(func=cmd_eval, width=None, height=None)

    r = sub.add_parser("render", help="colour-code a trajectory field")
    r.add_argument("--config")
    r.add_argument("--flow", dest="flow_field", required=True)
    r.add_argument("--time", type=float, help="normalized time in [0, 1]")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _resolve(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except OSError as exc:
        print(f"stscflow: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (STSCError, OSError) as exc:
        print(f"stscflow {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
