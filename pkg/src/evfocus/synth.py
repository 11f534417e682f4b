"""Synthetic event streams with known motion.

Events are drawn by sampling timestamps for each scene element and placing
the event where the element's point trajectory is at that time (no
brightness simulation).  Polarity is the element's contrast sign.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .camera import CameraGeometry, PoseTrack, so3_exp
from .events import EventWindow

__all__ = [
    "Rotation",
    "Flow",
    "Translation",
    "SceneSpec",
    "SynthResult",
    "EmptySceneError",
    "gen_events",
    "gen_two_event_1d",
    "random_points",
    "random_segments",
    "flow_patch_scene",
    "rotation_scene",
    "plane_scene",
]


class EmptySceneError(ValueError):
    pass


@dataclass(frozen=True)
class Rotation:
    omega: tuple  # rad/s, body frame


@dataclass(frozen=True)
class Flow:
    v: tuple  # px/s


@dataclass(frozen=True)
class Translation:
    """Camera translating at constant ``velocity`` (m/s) in front of a
    fronto-parallel plane at ``depth`` (m)."""

    velocity: tuple
    depth: float


@dataclass(frozen=True)
class SceneSpec:
    """Pattern elements and motion.

    ``points`` are pixel positions at the reference time (mid-duration).
    ``segments`` (K, 4) rows ``x0 y0 x1 y1`` are edge proxies; events are
    spread uniformly along each segment.  ``signs`` hold one contrast sign
    per point followed by one per segment.
    """

    motion: object
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    segments: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    signs: Optional[np.ndarray] = None
    duration: float = 0.1
    rate: float = 1000.0  # events per second per element
    jitter_px: float = 0.0
    jitter_t: float = 0.0
    outlier_fraction: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64).reshape(-1, 2))
        object.__setattr__(self, "segments", np.asarray(self.segments, dtype=np.float64).reshape(-1, 4))
        n = len(self.points) + len(self.segments)
        signs = np.ones(n) if self.signs is None else np.asarray(self.signs, dtype=np.float64).reshape(-1)
        if len(signs) != n or not np.all(np.abs(signs) == 1):
            raise ValueError("need one +1/-1 sign per element")
        object.__setattr__(self, "signs", signs)
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.rate < 0:
            raise ValueError("rate must be non-negative")
        if not 0 <= self.outlier_fraction < 1:
            raise ValueError("outlier fraction must lie in [0, 1)")

    @property
    def n_elements(self):
        return len(self.points) + len(self.segments)


@dataclass
class SynthResult:
    window: EventWindow
    theta: np.ndarray
    poses: Optional[PoseTrack] = None


def _trajectory(scene, geometry, base, t_rel):
    """Pixel position at time offset ``t_rel`` of elements at ``base`` (pixels at t_ref)."""
    m = scene.motion
    if isinstance(m, Flow):
        v = np.asarray(m.v, dtype=np.float64)
        return base + t_rel[:, None] * v[None, :], np.ones(len(t_rel), dtype=bool)
    xn, yn = geometry.normalized(base[:, 0], base[:, 1])
    b = np.stack([xn, yn, np.ones_like(xn)], axis=-1)
    if isinstance(m, Rotation):
        # camera rotating at body rate w: bearings at time t are exp(-t [w]x) b
        w = np.asarray(m.omega, dtype=np.float64)
        P = np.einsum("nij,nj->ni", so3_exp(-t_rel[:, None] * w[None, :]), b)
    elif isinstance(m, Translation):
        vel = np.asarray(m.velocity, dtype=np.float64)
        P = m.depth * b - t_rel[:, None] * vel[None, :]
    else:
        raise TypeError(f"unsupported motion {m!r}")
    ok = P[:, 2] > 1e-9
    Z = np.where(ok, P[:, 2], 1.0)
    u, v = geometry.distort_normalized(P[:, 0] / Z, P[:, 1] / Z)
    return np.stack([u, v], axis=-1), ok


def _theta(scene):
    m = scene.motion
    if isinstance(m, Flow):
        return np.asarray(m.v, dtype=np.float64)
    if isinstance(m, Rotation):
        return np.asarray(m.omega, dtype=np.float64)
    return np.array([float(m.depth)])


def _poses(scene, t_ref, rate_hz=200.0):
    m = scene.motion
    n = max(2, int(np.ceil(scene.duration * rate_hz)) + 1)
    t = np.linspace(0.0, scene.duration, n)
    vel = np.asarray(m.velocity, dtype=np.float64)
    trans = (t - t_ref)[:, None] * vel[None, :]
    quat = np.tile([0.0, 0.0, 0.0, 1.0], (n, 1))
    return PoseTrack(t, quat, trans)


def gen_events(scene: SceneSpec, geometry: CameraGeometry, seed=0) -> SynthResult:
    """Sample a time-sorted event window; t_ref is the mid-duration time."""
    rng = np.random.default_rng(seed)
    t_ref = 0.5 * scene.duration
    n_per = int(round(scene.rate * scene.duration))
    bases, signs = [], []
    for i, pt in enumerate(scene.points):
        bases.append(np.repeat(pt[None, :], n_per, axis=0))
        signs.append(np.full(n_per, scene.signs[i]))
    for k, seg in enumerate(scene.segments):
        s = rng.uniform(0.0, 1.0, n_per)
        bases.append(seg[None, :2] + s[:, None] * (seg[2:] - seg[:2])[None, :])
        signs.append(np.full(n_per, scene.signs[len(scene.points) + k]))
    if bases:
        base = np.concatenate(bases)
        pol = np.concatenate(signs)
    else:
        base = np.zeros((0, 2))
        pol = np.zeros(0)
    t = rng.uniform(0.0, scene.duration, len(base))
    xy, ok = _trajectory(scene, geometry, base, t - t_ref)
    if scene.jitter_px > 0:
        xy = xy + rng.normal(0.0, scene.jitter_px, xy.shape)
    if scene.jitter_t > 0:
        t = np.clip(t + rng.normal(0.0, scene.jitter_t, t.shape), 0.0, scene.duration)
    n_out = int(round(scene.outlier_fraction / (1 - scene.outlier_fraction) * len(base)))
    if n_out:
        xo = rng.uniform(0, geometry.width - 1, n_out)
        yo = rng.uniform(0, geometry.height - 1, n_out)
        xy = np.concatenate([xy, np.stack([xo, yo], axis=-1)])
        t = np.concatenate([t, rng.uniform(0.0, scene.duration, n_out)])
        pol = np.concatenate([pol, rng.choice([-1.0, 1.0], n_out)])
        ok = np.concatenate([ok, np.ones(n_out, dtype=bool)])
    inb = ok & (xy[:, 0] >= 0) & (xy[:, 0] <= geometry.width - 1) & (xy[:, 1] >= 0) & (xy[:, 1] <= geometry.height - 1)
    if not np.any(inb):
        raise EmptySceneError("no generated event falls inside the image")
    xy, t, pol = xy[inb], t[inb], pol[inb]
    order = np.argsort(t, kind="stable")
    window = EventWindow.from_arrays(t[order], xy[order, 0], xy[order, 1], pol[order], t_ref=t_ref)
    poses = _poses(scene, t_ref) if isinstance(scene.motion, Translation) else None
    return SynthResult(window, _theta(scene), poses)


def gen_two_event_1d(dx, sigma=1.0, step=0.01, half_width=10.0):
    """Two unit-mass Gaussians ``dx`` apart on a fine 1-D grid.

    Returns ``(x, profile)``; integrals use ``sum(profile) * step``.
    """
    if dx < 0:
        raise ValueError("dx must be non-negative")
    x = np.arange(-half_width, half_width + step / 2, step)
    g = lambda c: np.exp(-0.5 * ((x - c) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))  # noqa: E731
    return x, g(-dx / 2) + g(dx / 2)


# ---------------------------------------------------------------------------
# ready-made scenes used by tests, demos and the CLI

def random_points(rng, n, width, height, margin=8):
    return np.stack([rng.uniform(margin, width - 1 - margin, n), rng.uniform(margin, height - 1 - margin, n)], axis=-1)


def random_segments(rng, n, width, height, length=(4.0, 12.0), margin=8):
    c = random_points(rng, n, width, height, margin)
    ang = rng.uniform(0, np.pi, n)
    half = 0.5 * rng.uniform(*length, n)
    d = np.stack([np.cos(ang) * half, np.sin(ang) * half], axis=-1)
    return np.concatenate([c - d, c + d], axis=1)


def flow_patch_scene(v=(-40.0, 0.0), size=48, n_points=6, n_segments=6, duration=0.2, rate=400.0, seed=0, **kw):
    """Square patch with point features and short edges translating at flow ``v``."""
    rng = np.random.default_rng(seed)
    pts = random_points(rng, n_points, size, size, margin=6)
    segs = random_segments(rng, n_segments, size, size, margin=8)
    signs = rng.choice([-1.0, 1.0], n_points + n_segments)
    return SceneSpec(Flow(tuple(v)), points=pts, segments=segs, signs=signs, duration=duration, rate=rate, **kw)


def rotation_scene(omega, geometry, n_points=60, n_segments=20, n_events=20000, duration=0.03,
                   jitter_px=0.0, outlier_fraction=0.0, seed=0):
    """Points and short edges seen by a rotating camera; ``n_events`` is
    approximate (before outliers and out-of-view losses)."""
    rng = np.random.default_rng(seed)
    pts = random_points(rng, n_points, geometry.width, geometry.height, margin=10)
    segs = random_segments(rng, n_segments, geometry.width, geometry.height, margin=14)
    n = n_points + n_segments
    signs = rng.choice([-1.0, 1.0], n)
    rate = n_events / (n * duration)
    return SceneSpec(Rotation(tuple(omega)), points=pts, segments=segs, signs=signs, duration=duration,
                     rate=rate, jitter_px=jitter_px, outlier_fraction=outlier_fraction)


def plane_scene(geometry, depth=1.1, baseline=0.3, duration=1.0, n_points=150, n_segments=40,
                n_events=30000, jitter_px=0.0, seed=0):
    """Fronto-parallel textured plane at ``depth`` seen by a camera translating
    ``baseline`` meters along x over ``duration`` seconds."""
    rng = np.random.default_rng(seed)
    # elements visible over the whole sweep: keep away from the borders by the parallax
    shift = geometry.fx * baseline / (2 * depth)
    margin = int(np.ceil(shift)) + 6
    if 2 * margin >= geometry.width:
        margin = 8
    pts = np.stack([rng.uniform(margin, geometry.width - 1 - margin, n_points),
                    rng.uniform(8, geometry.height - 9, n_points)], axis=-1)
    segs = random_segments(rng, n_segments, geometry.width - 2 * margin, geometry.height, margin=10)
    segs[:, [0, 2]] += margin
    n = n_points + n_segments
    signs = rng.choice([-1.0, 1.0], n)
    rate = n_events / (n * duration)
    vel = (baseline / duration, 0.0, 0.0)
    return SceneSpec(Translation(vel, depth), points=pts, segments=segs, signs=signs, duration=duration,
                     rate=rate, jitter_px=jitter_px)
