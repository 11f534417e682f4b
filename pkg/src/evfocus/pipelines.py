"""Experiment drivers behind the command-line interface.

Each ``run_*`` function does the numerical work and returns plain data;
the matching ``write_*`` helpers emit CSV / PGM / PFM files.  Floats in CSV
files carry 9 significant digits.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from . import filters
from .camera import CameraGeometry, PoseTrack, angular_velocity_from_poses
from .events import EventArray, EventWindow, slice_by_count
from .imageio import write_pfm, write_pgm
from .iwe import IweOptions, accumulate_iwe, accumulate_iwe_with_gradient, timestamp_image
from .losses import LOSS_NAMES, WEIGHTS, LossSpec, evaluate
from .optim import Objective, OptimConfig, default_step, depth_samples, grid_eval_2d, maximize, sweep_depth
from .synth import flow_patch_scene, gen_events, rotation_scene
from .warps import DepthWarp, FlowWarp, RotationWarp

logger = logging.getLogger(__name__)

__all__ = [
    "fmt",
    "resolve_losses",
    "non_identifiable",
    "AngvelRow",
    "run_angvel",
    "summarize_angvel",
    "write_angvel",
    "FlowSurface",
    "patch_window",
    "run_flow_surface",
    "write_flow_surface",
    "DepthResult",
    "run_depth",
    "write_depth",
    "GradcheckRow",
    "run_gradcheck",
    "write_gradcheck",
    "run_bench",
    "write_bench",
]


class DataError(ValueError):
    """Input data cannot support the requested computation."""


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.9g}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def resolve_losses(names) -> list:
    """Split a comma-separated selection ("all" allowed) into known loss names."""
    if isinstance(names, str):
        names = [s.strip() for s in names.split(",") if s.strip()]
    out = []
    for n in names:
        if n == "all":
            out.extend(LOSS_NAMES)
            continue
        LossSpec.parse(n)
        out.append(n)
    return list(dict.fromkeys(out))


def non_identifiable(name, use_polarity):
    """MAV-type losses on unsigned images are constant in theta (sum of unit masses)."""
    return not use_polarity and LossSpec.parse(name).kind in ("mav", "local-mav")


# ---------------------------------------------------------------------------
# angular velocity

@dataclass
class AngvelRow:
    loss: str
    window: int
    t_start: float
    t_end: float
    t_mid: float
    omega: np.ndarray
    gt: Optional[np.ndarray]
    iterations: int
    n_grad: int

    @property
    def error(self):
        return None if self.gt is None else self.omega - self.gt


def run_angvel(stream: EventArray, geometry: CameraGeometry, losses, use_polarity=False, n_events=30000,
               stride=None, poses: Optional[PoseTrack] = None, config: Optional[OptimConfig] = None,
               ref="mid", theta0=None):
    """Sequential angular-velocity estimation over event windows.

    Each window is initialized with the estimate of the previous one (zero
    for the first).  Ground truth, when poses are given, is taken at the
    window's midpoint time.
    """
    cfg = config or OptimConfig(initial_step=default_step("rotation"))
    windows = slice_by_count(stream, n_events, stride, ref=ref)
    warp = RotationWarp(geometry)
    opts = IweOptions(use_polarity=use_polarity)
    rows = []
    for name in resolve_losses(losses):
        if non_identifiable(name, use_polarity):
            logger.info("%s without polarity is not identifiable; skipped", name)
            continue
        theta = np.zeros(3) if theta0 is None else np.asarray(theta0, dtype=np.float64)
        for i, w in enumerate(windows):
            res = maximize(Objective(w, warp, name, opts), theta, cfg)
            theta = res.theta
            t0, t1 = float(w.t[0]), float(w.t[-1])
            tm = 0.5 * (t0 + t1)
            gt = None
            if poses is not None:
                try:
                    gt = angular_velocity_from_poses(poses, tm)
                except ValueError as exc:
                    logger.warning("no ground truth for window %d: %s", i, exc)
            rows.append(AngvelRow(name, i, t0, t1, tm, theta.copy(), gt, res.iterations, res.n_grad))
    return rows


_AXES = ("x", "y", "z")


def summarize_angvel(rows, losses, use_polarity=False):
    """Per-loss mean, standard deviation and RMS of the errors in deg/s.

    Returns a list of dicts; entries are ``"-"`` for non-identifiable losses
    and ``None`` where no ground truth is available.
    """
    out = []
    for name in resolve_losses(losses):
        rec = {"loss": name, "polarity": "on" if use_polarity else "off"}
        if non_identifiable(name, use_polarity):
            rec.update({k: "-" for k in _summary_keys()})
            out.append(rec)
            continue
        mine = [r for r in rows if r.loss == name]
        err = np.array([np.degrees(r.error) for r in mine if r.gt is not None]).reshape(-1, 3)
        rec["n_windows"] = len(mine)
        if len(err) == 0:
            rec.update({k: None for k in _summary_keys() if k != "n_windows"})
        else:
            for a, col in zip(_AXES, err.T):
                rec[f"mean_{a}"] = col.mean()
                rec[f"std_{a}"] = col.std()
                rec[f"rms_{a}"] = np.sqrt(np.mean(col**2))
            rec["rms"] = np.sqrt(np.mean(err**2))
        out.append(rec)
    return out


def _summary_keys():
    keys = ["n_windows"]
    for a in _AXES:
        keys += [f"mean_{a}", f"std_{a}", f"rms_{a}"]
    return keys + ["rms"]


ANGVEL_HEADER = ["loss", "window", "t_start", "t_end", "t_mid", "wx", "wy", "wz",
                 "gt_wx", "gt_wy", "gt_wz", "err_x_deg", "err_y_deg", "err_z_deg", "iterations", "n_grad"]


def write_angvel(out_dir, rows, summary):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = []
    for r in rows:
        gt = [None] * 3 if r.gt is None else list(r.gt)
        err = [None] * 3 if r.gt is None else list(np.degrees(r.error))
        table.append([r.loss, r.window, r.t_start, r.t_end, r.t_mid, *r.omega, *gt, *err, r.iterations, r.n_grad])
    _write_csv(out_dir / "errors.csv", ANGVEL_HEADER, table)
    keys = ["loss", "polarity", *_summary_keys()]
    _write_csv(out_dir / "summary.csv", keys, [[s.get(k) for k in keys] for s in summary])


# ---------------------------------------------------------------------------
# optical-flow loss surfaces

@dataclass
class FlowSurface:
    loss: str
    vx: np.ndarray
    vy: np.ndarray
    raw: np.ndarray         # loss values, rows follow vy
    normalized: np.ndarray  # raw / max |raw|
    best: np.ndarray        # extremum in the loss sense


def patch_window(stream: EventArray, rect, t_span=None, ref="mid") -> EventWindow:
    """Events inside ``rect = (x0, y0, w, h)`` and ``t_span``, in patch coordinates."""
    x0, y0, w, h = rect
    keep = (stream.x >= x0) & (stream.x < x0 + w) & (stream.y >= y0) & (stream.y < y0 + h)
    if t_span is not None:
        keep &= (stream.t >= t_span[0]) & (stream.t <= t_span[1])
    idx = np.flatnonzero(keep)
    if len(idx) == 0:
        raise DataError(f"no events in patch {tuple(rect)}")
    return EventWindow.from_arrays(stream.t[idx], stream.x[idx] - x0, stream.y[idx] - y0, stream.p[idx], ref=ref)


def run_flow_surface(window: EventWindow, shape, losses, use_polarity=False, center=(0.0, 0.0),
                     half_span=60.0, steps=41):
    out = []
    opts = IweOptions(use_polarity=use_polarity)
    for name in resolve_losses(losses):
        obj = Objective(window, FlowWarp(), name, opts, shape=shape)
        g = grid_eval_2d(obj, center, half_span, steps)
        peak = np.max(np.abs(g.raw))
        norm = g.raw / peak if peak > 0 else np.zeros_like(g.raw)
        out.append(FlowSurface(name, g.vx, g.vy, g.raw, norm, g.best))
    return out


def write_flow_surface(out_dir, surfaces):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for s in surfaces:
        rows = []
        for i, vy in enumerate(s.vy):
            for j, vx in enumerate(s.vx):
                rows.append([vx, vy, s.raw[i, j], s.normalized[i, j]])
        _write_csv(out_dir / f"surface_{s.loss}.csv", ["vx", "vy", "value", "normalized"], rows)
        # bright = better focus in the loss sense
        write_pgm(out_dir / f"surface_{s.loss}.pgm", LossSpec.parse(s.loss).sign * s.raw)
    _write_csv(out_dir / "argmax.csv", ["loss", "vx", "vy"], [[s.loss, *s.best] for s in surfaces])


# ---------------------------------------------------------------------------
# depth from focus

@dataclass
class DepthResult:
    depths: np.ndarray
    curves: dict            # loss -> FocalCurve over the whole image
    depth: np.ndarray       # per-pixel depth, 0 where invalid
    confidence: np.ndarray  # per-pixel confidence (>= 0)
    valid: np.ndarray
    best_index: np.ndarray  # per-pixel index into depths (-1 where invalid)
    loss: str


_PATCH = filters.gaussian_kernel_2d(1.0, 1)  # 3x3 Gaussian-weighted neighborhood


def _patch_focus(slices, kind):
    """Per-pixel focus of each DSI slice on 3x3 Gaussian-weighted patches."""
    spec = LossSpec.parse(kind)
    W = lambda a: filters.correlate2d(a, _PATCH)  # noqa: E731
    if spec.kind == "variance":
        m = W(slices)
        return W(slices * slices) - m * m
    if spec.kind == "mean-square":
        return W(slices * slices)
    if spec.kind == "area":
        _, F = WEIGHTS[spec.weight]
        return W(F(slices / spec.area_scale))
    raise ValueError(f"per-pixel depth supports variance, mean-square and area losses, not {kind!r}")


def _second_peak(c, best, exclude=2):
    """Largest local maximum of curves ``c`` (S, H, W) farther than ``exclude`` samples from ``best``."""
    pad = np.full((1,) + c.shape[1:], -np.inf)
    cp = np.concatenate([pad, c, pad])
    is_peak = (c >= cp[:-2]) & (c >= cp[2:])
    far = np.abs(np.arange(len(c))[:, None, None] - best[None]) > exclude
    return np.max(np.where(is_peak & far, c, 0.0), axis=0)


def run_depth(window: EventWindow, geometry: CameraGeometry, poses: PoseTrack, losses=("variance", "area-exp"),
              pixel_loss="variance", z_min=0.5, z_max=3.0, steps=50, spacing="inverse", keep_fraction=0.3,
              uniqueness=0.5, min_events=3.0, median=False, roi=None) -> DepthResult:
    """Focal curves over the image and a semi-dense per-pixel depth map.

    A pixel is valid when its focal curve has an interior extremum that is
    unambiguous (any other peak more than two samples away stays below
    ``uniqueness`` on the min-max normalized curve), its patch holds at least
    ``min_events`` warped events at that slice, and its confidence is in the
    top ``keep_fraction`` of the remaining pixels.

    Pixels off an edge along the parallax direction are reached by the
    smeared edge at two depths, one on each side of the true one; the
    uniqueness test removes them.
    """
    warp = DepthWarp(geometry, poses)
    curves = {}
    for name in resolve_losses(losses):
        obj = Objective(window, warp, name, IweOptions())
        if roi is not None:
            obj = _RoiObjective(obj, roi)
        curves[name] = sweep_depth(obj, z_min, z_max, steps, spacing)

    depths = depth_samples(z_min, z_max, steps, spacing)
    slices = np.stack([accumulate_iwe(window, warp, np.array([z]), IweOptions()) for z in depths])
    spec = LossSpec.parse(pixel_loss)
    focus = _patch_focus(slices, pixel_loss)
    c = spec.sign * focus
    best = np.argmax(c, axis=0)
    hi, lo = c.max(axis=0), c.min(axis=0)
    prominence = hi - lo
    confidence = np.maximum(focus.max(axis=0) if spec.sign > 0 else prominence, 0.0)
    scale = max(float(np.max(np.abs(focus))), 1e-300)
    valid = prominence > 1e-9 * scale
    valid &= (best > 0) & (best < len(depths) - 1)
    norm = (c - lo) / np.where(valid, prominence, 1.0)
    valid &= _second_peak(norm, best) < uniqueness
    counts = filters.correlate2d(slices, np.ones((3, 3)))
    valid &= np.take_along_axis(counts, best[None], axis=0)[0] >= min_events
    if np.any(valid):
        thr = np.quantile(confidence[valid], 1.0 - keep_fraction)
        valid &= confidence >= thr
    depth = np.where(valid, depths[best], 0.0)
    if median and np.any(valid):
        d = np.where(valid, depth, np.nan)
        d = ndimage.generic_filter(d, np.nanmedian, size=3, mode="constant", cval=np.nan)
        depth = np.where(valid, d, 0.0)
    return DepthResult(depths, curves, depth, confidence, valid, np.where(valid, best, -1), pixel_loss)


class _RoiObjective:
    """Objective restricted to a rectangle ``(x0, y0, w, h)`` of the IWE."""

    def __init__(self, obj, roi):
        self.obj = obj
        self.roi = roi
        self.sign = obj.sign

    def __call__(self, theta):
        x0, y0, w, h = self.roi
        o = self.obj
        img = accumulate_iwe(o.window, o.warp, theta, o.options)[y0:y0 + h, x0:x0 + w]
        return self.sign * evaluate(o.loss, img).value


def write_depth(out_dir, res: DepthResult):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = list(res.curves)
    header = ["depth"] + [f"{n}{suffix}" for n in names for suffix in ("", "_normalized")]
    rows = []
    for k, z in enumerate(res.depths):
        row = [z]
        for n in names:
            row += [res.curves[n].raw[k], res.curves[n].normalized[k]]
        rows.append(row)
    _write_csv(out_dir / "focal_curves.csv", header, rows)
    _write_csv(out_dir / "best_depth.csv", ["loss", "depth", "index"],
               [[n, c.best_depth, c.best_index] for n, c in res.curves.items()])
    write_pfm(out_dir / "depth.pfm", res.depth)
    write_pfm(out_dir / "confidence.pfm", res.confidence)
    write_pgm(out_dir / "depth.pgm", np.where(res.valid, 1.0 / np.where(res.valid, res.depth, 1.0), 0.0))


# ---------------------------------------------------------------------------
# gradient check

@dataclass
class GradcheckRow:
    loss: str
    warp: str
    seed: int
    max_abs_err: Optional[float]
    max_rel_err: Optional[float]
    status: str  # pass, fail or fd-only


GRADCHECK_SHAPE = (64, 64)


def gradcheck_window(kind, seed, n_events=1000):
    """Random synthetic window, its warp and a parameter point near the truth."""
    rng = np.random.default_rng(seed)
    H, W = GRADCHECK_SHAPE
    geo = CameraGeometry.pinhole(W, H, 60.0)
    if kind == "rotation":
        w = rng.normal(size=3)
        w *= rng.uniform(0.5, 3.0) / np.linalg.norm(w)
        scene = rotation_scene(w, geo, n_points=25, n_segments=10, n_events=n_events, duration=0.05,
                               seed=int(rng.integers(1 << 31)))
        warp = RotationWarp(geo)
        theta = w + rng.normal(0.0, 0.2, 3)
    else:
        v = rng.uniform(-60, 60, 2)
        scene = flow_patch_scene(v, size=W, n_points=20, n_segments=6, duration=0.1, rate=n_events / 2.6,
                                 seed=int(rng.integers(1 << 31)))
        warp = FlowWarp()
        theta = v + rng.normal(0.0, 5.0, 2)
    window = gen_events(scene, geo, seed=int(rng.integers(1 << 31))).window
    return window, warp, theta


def run_gradcheck(losses="all", warps=("rotation", "flow"), seeds=range(10), h=1e-4, rtol=1e-4, atol=1e-6,
                  use_polarity=True, corrupt_scale=None) -> list:
    """Compare analytic loss gradients with central differences.

    IWEs at theta and theta +- h e_j are built once per window and shared by
    all losses.  ``corrupt_scale`` multiplies every analytic gradient (a hook
    for checking that the harness detects errors).
    """
    names = resolve_losses(losses)
    rows = []
    opts = IweOptions(use_polarity=use_polarity)
    unsigned = IweOptions(use_polarity=False)
    for kind in warps:
        for seed in seeds:
            window, warp, theta = gradcheck_window(kind, seed)
            M = theta.size
            probes = [theta + s * h * e for e in np.eye(M) for s in (1.0, -1.0)]

            def images(win, o):
                base = accumulate_iwe_with_gradient(win, warp, theta, o, shape=GRADCHECK_SHAPE)
                return base, [accumulate_iwe(win, warp, p, o, shape=GRADCHECK_SHAPE) for p in probes]

            cache = {"all": images(window, opts)}
            if use_polarity:
                cache["pos"] = images(window.subset(window.p > 0), unsigned)
                cache["neg"] = images(window.subset(window.p < 0), unsigned)
            for name in names:
                spec = LossSpec.parse(name)
                if not spec.analytic:
                    rows.append(GradcheckRow(name, kind, seed, None, None, "fd-only"))
                    continue
                parts = ["pos", "neg"] if (spec.kind == "area" and use_polarity) else ["all"]
                g = np.zeros(M)
                vals = np.zeros(2 * M)
                for part in parts:
                    base, shifted = cache[part]
                    g += evaluate(spec, base.image, base.grads).gradient
                    vals += [evaluate(spec, img).value for img in shifted]
                if corrupt_scale is not None:
                    g = g * corrupt_scale
                fd = (vals[0::2] - vals[1::2]) / (2 * h)
                err = float(np.max(np.abs(g - fd)))
                ref = float(np.max(np.abs(fd)))
                ok = err <= max(rtol * ref, atol)
                rel = err / ref if ref > 0 else (0.0 if err == 0 else np.inf)
                rows.append(GradcheckRow(name, kind, seed, err, rel, "pass" if ok else "fail"))
    return rows


def write_gradcheck(out_dir, rows):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "gradcheck.csv", ["loss", "warp", "seed", "max_abs_err", "max_rel_err", "status"],
               [[r.loss, r.warp, r.seed, r.max_abs_err, r.max_rel_err, r.status] for r in rows])


# ---------------------------------------------------------------------------
# timing

def _median_time(f, reps):
    times = np.empty(reps)
    for i in range(reps):
        t0 = time.perf_counter()
        f()
        times[i] = time.perf_counter() - t0
    return float(np.median(times))


def bench_window(n_events, geometry=None, seed=0):
    geo = geometry or CameraGeometry.pinhole(240, 180, 200.0)
    scene = rotation_scene((0.5, -0.3, 2.0), geo, n_events=n_events, seed=seed)
    return gen_events(scene, geo, seed=seed).window, geo


def run_bench(n_events=30000, reps=100, losses="all", use_polarity=False, seed=0, window=None, geometry=None):
    """Median wall times (seconds) of warp+accumulate and of each loss on the resulting IWE.

    Returns rows ``(name, n_events, height, width, median_seconds)``.
    """
    if window is None:
        window, geometry = bench_window(n_events, geometry, seed)
    warp = RotationWarp(geometry)
    theta = np.array([0.5, -0.3, 2.0])
    opts = IweOptions(use_polarity=use_polarity)
    H, W = geometry.height, geometry.width
    rows = [("warp+accumulate", len(window), H, W,
             _median_time(lambda: accumulate_iwe(window, warp, theta, opts), reps))]
    img = accumulate_iwe(window, warp, theta, opts)
    img_pos = accumulate_iwe(window.subset(window.p > 0), warp, theta, IweOptions(), shape=(H, W))
    for name in resolve_losses(losses):
        spec = LossSpec.parse(name)
        if spec.kind == "mean-timestamp":
            arg = timestamp_image(window, warp, theta)
        elif spec.kind == "area" and use_polarity:
            arg = img_pos
        else:
            arg = img
        rows.append((name, len(window), H, W, _median_time(lambda: evaluate(spec, arg), reps)))
    return rows


def write_bench(out_dir, rows):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "timing.csv", ["name", "n_events", "height", "width", "median_us"],
               [[n, ne, h, w, t * 1e6] for n, ne, h, w, t in rows])
