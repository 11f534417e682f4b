"""Command-line driver: ``evfocus {angvel,flow-surface,depth,gradcheck,bench,synth}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 gradient-check failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import pipelines as pl
from .camera import CameraGeometry, PoseTrack, load_calib, load_poses, save_calib, save_poses, so3_exp
from .events import EventArray, EventParseError, EventWindow, load_events, save_events
from .optim import OptimConfig, default_step
from .synth import EmptySceneError, flow_patch_scene, gen_events, plane_scene, rotation_scene

logger = logging.getLogger("evfocus")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_GRADCHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(n):
    def parse(text):
        try:
            vals = tuple(float(s) for s in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        if len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        return vals

    return parse


def _rect(text):
    vals = _floats(4)(text)
    if any(v != int(v) for v in vals) or vals[2] < 1 or vals[3] < 1:
        raise argparse.ArgumentTypeError("patch must be integers x0,y0,w,h with w,h >= 1")
    return tuple(int(v) for v in vals)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _common(p, events=True, calib=False, poses=False):
    if events:
        p.add_argument("--events", type=Path, required=True, help="events.txt (t x y p)")
    if calib:
        p.add_argument("--calib", type=Path, required=True, help="calib.txt (fx fy cx cy k1 k2 p1 p2 k3)")
    if poses:
        p.add_argument("--poses", type=Path, help="groundtruth.txt (t tx ty tz qx qy qz qw)")
    p.add_argument("--width", type=_positive_int, default=240, help="sensor width in pixels")
    p.add_argument("--height", type=_positive_int, default=180, help="sensor height in pixels")
    p.add_argument("--loss", default="variance", help="loss name(s), comma-separated, or 'all'")
    p.add_argument("--polarity", choices=("on", "off"), default="off")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="evfocus", description="Motion compensation of event data by focus maximization.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("angvel", help="sequential angular-velocity estimation")
    _common(p, calib=True, poses=True)
    p.add_argument("--n-events", type=_positive_int, default=30000, help="events per window")
    p.add_argument("--stride", type=_positive_int, help="events between window starts (default: n-events)")
    p.add_argument("--ref", choices=("mid", "first", "last"), default="mid", help="reference time in each window")
    p.add_argument("--max-iter", type=_positive_int, default=100)

    p = sub.add_parser("flow-surface", help="loss surfaces over a grid of optical flows")
    _common(p)
    p.add_argument("--patch", type=_rect, required=True, help="x0,y0,w,h")
    p.add_argument("--t-span", type=_floats(2), help="t0,t1 in seconds (default: all events)")
    p.add_argument("--center", type=_floats(2), default=(0.0, 0.0), help="grid center vx,vy (px/s)")
    p.add_argument("--span", type=float, default=60.0, help="grid half-span (px/s)")
    p.add_argument("--steps", type=_positive_int, default=41, help="grid points per axis")

    p = sub.add_parser("depth", help="focal curves and a semi-dense depth map")
    _common(p, calib=True, poses=True)
    p.set_defaults(loss="variance,area-exp")
    p.add_argument("--n-events", type=_positive_int, help="use the first N events (default: all)")
    p.add_argument("--z-min", type=float, default=0.5)
    p.add_argument("--z-max", type=float, default=3.0)
    p.add_argument("--steps", type=_positive_int, default=50)
    p.add_argument("--spacing", choices=("inverse", "linear"), default="inverse")
    p.add_argument("--pixel-loss", default="variance", help="per-pixel focus: variance, mean-square or area-*")
    p.add_argument("--keep", type=float, default=0.3, help="fraction of candidate pixels kept by confidence")
    p.add_argument("--uniqueness", type=float, default=0.5, help="max normalized height of a competing peak")
    p.add_argument("--min-events", type=float, default=3.0, help="minimum warped events in a 3x3 patch")
    p.add_argument("--median", action="store_true", help="3x3 median filter on the depth map")
    p.add_argument("--roi", type=_rect, help="x0,y0,w,h region for the focal curves")

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference loss gradients")
    p.add_argument("--loss", default="all")
    p.add_argument("--warps", default="rotation,flow")
    p.add_argument("--seeds", type=_positive_int, default=10, help="number of random windows per warp")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--h", type=float, default=1e-4, help="finite-difference step")
    p.add_argument("--polarity", choices=("on", "off"), default="on")
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--corrupt-scale", type=float, help=argparse.SUPPRESS)

    p = sub.add_parser("bench", help="timing of IWE accumulation and loss evaluation")
    p.add_argument("--loss", default="all")
    p.add_argument("--n-events", type=_positive_int, default=30000)
    p.add_argument("--reps", type=_positive_int, default=100)
    p.add_argument("--polarity", choices=("on", "off"), default="off")
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="write a synthetic dataset (events, calibration, poses)")
    p.add_argument("--kind", choices=("rotation", "flow", "depth"), default="rotation")
    p.add_argument("--omega", type=_floats(3), default=(0.5, -0.3, 2.0), help="rad/s (rotation)")
    p.add_argument("--flow", type=_floats(2), default=(-40.0, 0.0), help="px/s (flow)")
    p.add_argument("--depth", type=float, default=1.1, help="plane depth in m (depth)")
    p.add_argument("--baseline", type=float, default=0.3, help="camera travel in m (depth)")
    p.add_argument("--n-events", type=_positive_int, default=30000)
    p.add_argument("--duration", type=float, help="seconds (default depends on kind)")
    p.add_argument("--jitter", type=float, default=0.0, help="coordinate noise (px)")
    p.add_argument("--outliers", type=float, default=0.0, help="fraction of uniform noise events")
    p.add_argument("--width", type=_positive_int, default=240)
    p.add_argument("--height", type=_positive_int, default=180)
    p.add_argument("--focal", type=float, default=200.0, help="focal length (px)")
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--seed", type=int, default=0)
    return parser


# ---------------------------------------------------------------------------

def _geometry(args):
    return load_calib(args.calib, args.width, args.height)


def _stream(args, geometry=None):
    loaded = load_events(args.events, geometry=geometry, width=args.width, height=args.height)
    if loaded.n_dropped:
        logger.warning("dropped %d out-of-bounds events", loaded.n_dropped)
    return loaded.events


def cmd_angvel(args):
    geo = _geometry(args)
    stream = _stream(args, geo)
    poses = load_poses(args.poses) if args.poses else None
    pol = args.polarity == "on"
    cfg = OptimConfig(initial_step=default_step("rotation"), max_iter=args.max_iter)
    rows = pl.run_angvel(stream, geo, args.loss, pol, args.n_events, args.stride, poses, cfg, ref=args.ref)
    summary = pl.summarize_angvel(rows, args.loss, pol) if len(stream) >= args.n_events else []
    pl.write_angvel(args.out, rows, summary)
    return EXIT_OK


def cmd_flow_surface(args):
    stream = _stream(args)
    x0, y0, w, h = args.patch
    window = pl.patch_window(stream, args.patch, args.t_span)
    logger.info("patch %s: %d events", args.patch, len(window))
    if args.steps < 2:
        raise UsageError("--steps must be >= 2")
    surfaces = pl.run_flow_surface(window, (h, w), args.loss, args.polarity == "on", args.center, args.span, args.steps)
    pl.write_flow_surface(args.out, surfaces)
    return EXIT_OK


def cmd_depth(args):
    geo = _geometry(args)
    stream = _stream(args, geo)
    if args.poses is None:
        raise UsageError("depth needs --poses")
    poses = load_poses(args.poses)
    if args.n_events is not None:
        stream = stream[: args.n_events]
    if len(stream) == 0:
        raise pl.DataError("no events")
    window = EventWindow(stream, 0.5 * (stream.t[0] + stream.t[-1]))
    res = pl.run_depth(window, geo, poses, pl.resolve_losses(args.loss), args.pixel_loss, args.z_min, args.z_max,
                       args.steps, args.spacing, args.keep, args.uniqueness, args.min_events, args.median, args.roi)
    pl.write_depth(args.out, res)
    return EXIT_OK


def cmd_gradcheck(args):
    warps = [w.strip() for w in args.warps.split(",") if w.strip()]
    if not warps or any(w not in ("rotation", "flow") for w in warps):
        raise UsageError("--warps takes rotation and/or flow")
    rows = pl.run_gradcheck(args.loss, warps, range(args.seed, args.seed + args.seeds), h=args.h,
                            use_polarity=args.polarity == "on", corrupt_scale=args.corrupt_scale)
    pl.write_gradcheck(args.out, rows)
    n_fail = sum(r.status == "fail" for r in rows)
    logger.info("gradcheck: %d rows, %d failures", len(rows), n_fail)
    return EXIT_GRADCHECK if n_fail else EXIT_OK


def cmd_bench(args):
    rows = pl.run_bench(args.n_events, args.reps, args.loss, args.polarity == "on", args.seed)
    pl.write_bench(args.out, rows)
    return EXIT_OK


def cmd_synth(args):
    geo = CameraGeometry.pinhole(args.width, args.height, args.focal)
    if args.kind == "rotation":
        dur = args.duration or 0.2
        scene = rotation_scene(args.omega, geo, n_events=args.n_events, duration=dur, jitter_px=args.jitter,
                               outlier_fraction=args.outliers, seed=args.seed)
    elif args.kind == "flow":
        dur = args.duration or 0.2
        scene = flow_patch_scene(args.flow, size=min(args.width, args.height), seed=args.seed,
                                 duration=dur, jitter_px=args.jitter, outlier_fraction=args.outliers)
        scene = replace(scene, rate=args.n_events / (scene.n_elements * dur))
    else:
        dur = args.duration or 1.0
        scene = plane_scene(geo, depth=args.depth, baseline=args.baseline, duration=dur, n_events=args.n_events,
                            jitter_px=args.jitter, seed=args.seed)
    res = gen_events(scene, geo, seed=args.seed)
    w = res.window
    # the text format stores integer pixels
    x, y = np.round(w.x), np.round(w.y)
    keep = (x >= 0) & (x < geo.width) & (y >= 0) & (y < geo.height)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_events(out / "events.txt", EventArray(w.t[keep], x[keep], y[keep], w.p[keep]))
    save_calib(out / "calib.txt", geo)
    if args.kind == "rotation":
        t = np.linspace(0.0, dur, max(2, int(round(dur * 200)) + 1))
        R = so3_exp((t - w.t_ref)[:, None] * np.asarray(args.omega)[None, :])
        save_poses(out / "groundtruth.txt", PoseTrack(t, Rotation.from_matrix(R).as_quat(), np.zeros((len(t), 3))))
    elif args.kind == "depth":
        save_poses(out / "groundtruth.txt", res.poses)
    with open(out / "truth.txt", "w") as fh:
        fh.write(f"{args.kind} " + " ".join(f"{v:.9g}" for v in res.theta) + "\n")
    return EXIT_OK


COMMANDS = {
    "angvel": cmd_angvel,
    "flow-surface": cmd_flow_surface,
    "depth": cmd_depth,
    "gradcheck": cmd_gradcheck,
    "bench": cmd_bench,
    "synth": cmd_synth,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error reported by the parser
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if hasattr(args, "loss"):
            pl.resolve_losses(args.loss)
        if hasattr(args, "pixel_loss"):
            pl.resolve_losses(args.pixel_loss)
    except ValueError as exc:
        print(f"evfocus: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"evfocus: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, EventParseError, EmptySceneError, pl.DataError, ValueError) as exc:
        print(f"evfocus: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
