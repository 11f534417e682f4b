"""Point-trajectory warps x' = W(x, t; theta) and their parameter Jacobians.

Three models are provided, each as a small class operating on a whole
:class:`~evfocus.events.EventWindow` at once:

* :class:`RotationWarp`  - camera rotation, theta = angular velocity (rad/s)
* :class:`FlowWarp`      - constant image-plane flow, theta = (vx, vy) px/s
* :class:`DepthWarp`     - known camera poses, theta = (Z,) in meters

Warped coordinates live in the undistorted image plane.  Scalar helpers
(:func:`warp_rotation`, :func:`warp_flow`, :func:`warp_depth`) wrap the
vectorized code for single events.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .camera import CameraGeometry, PoseSample, PoseTrack, _rodrigues_coeffs, hat, so3_left_jacobian
from .events import Event, EventWindow

__all__ = [
    "WarpedEvents",
    "WarpedEvent",
    "RotationWarp",
    "FlowWarp",
    "DepthWarp",
    "warp_rotation",
    "warp_flow",
    "warp_depth",
]

_MIN_DEPTH = 1e-9


@dataclass(frozen=True)
class WarpedEvents:
    """Warped positions for a window.

    ``jac`` has shape (N, 2, M) when requested.  ``valid`` is False where the
    warp is geometrically undefined (point behind a camera); such events are
    ignored by the accumulation.
    """

    x: np.ndarray
    y: np.ndarray
    valid: np.ndarray
    jac: Optional[np.ndarray] = None


@dataclass(frozen=True)
class WarpedEvent:
    x: float
    y: float
    in_bounds: bool
    jacobian: Optional[np.ndarray] = None


def _rotate(phi, b):
    """Rodrigues rotation of rows of ``b`` by rotation vectors ``phi``."""
    a, c, _ = _rodrigues_coeffs(np.linalg.norm(phi, axis=-1))
    pb = np.cross(phi, b)
    return b + a[:, None] * pb + c[:, None] * np.cross(phi, pb)


def _project_jacobian_apply(P, dP, geometry):
    """(N, 2, M) image Jacobian from dP/dtheta (N, 3, M) under pinhole projection."""
    Z = np.where(P[:, 2] > _MIN_DEPTH, P[:, 2], 1.0)
    iz = 1.0 / Z
    jac = np.empty((len(P), 2, dP.shape[2]))
    jac[:, 0] = geometry.fx * iz[:, None] * (dP[:, 0] - (P[:, 0] * iz)[:, None] * dP[:, 2])
    jac[:, 1] = geometry.fy * iz[:, None] * (dP[:, 1] - (P[:, 1] * iz)[:, None] * dP[:, 2])
    return jac


def _project(P, geometry):
    valid = P[:, 2] > _MIN_DEPTH
    Z = np.where(valid, P[:, 2], 1.0)
    u = geometry.fx * P[:, 0] / Z + geometry.cx
    v = geometry.fy * P[:, 1] / Z + geometry.cy
    return u, v, valid


class RotationWarp:
    """Pure camera rotation at constant body-frame angular velocity.

    An event bearing b_k observed at t_k is carried to the reference time by
    b' = exp((t_k - t_ref) [w]x) b_k and reprojected with the pinhole model.
    With this sign convention theta is the camera's body-frame angular
    velocity, the same quantity returned by
    :func:`~evfocus.camera.angular_velocity_from_poses`.
    """

    kind = "rotation"
    dim = 3

    def __init__(self, geometry: CameraGeometry):
        self.geometry = geometry
        self._cache = None

    def _bearings(self, window):
        if self._cache is not None and self._cache[0] is window:
            return self._cache[1]
        xn, yn = self.geometry.normalized(window.x, window.y)
        b = np.stack([xn, yn, np.ones_like(xn)], axis=-1)
        self._cache = (window, b)
        return b

    def __call__(self, window: EventWindow, theta, with_jacobian=False) -> WarpedEvents:
        omega = np.asarray(theta, dtype=np.float64).reshape(3)
        b = self._bearings(window)
        dt = window.t - window.t_ref
        phi = dt[:, None] * omega[None, :]
        P = _rotate(phi, b)
        u, v, valid = _project(P, self.geometry)
        jac = None
        if with_jacobian:
            # d(R b)/d(phi) = -[R b]x J_l(phi);  phi = dt * omega
            dP = -hat(P) @ so3_left_jacobian(phi)
            dP *= dt[:, None, None]
            jac = _project_jacobian_apply(P, dP, self.geometry)
        return WarpedEvents(u, v, valid, jac)


class FlowWarp:
    """Constant optical flow: x' = x - (t - t_ref) v."""

    kind = "flow"
    dim = 2

    def __call__(self, window: EventWindow, theta, with_jacobian=False) -> WarpedEvents:
        vx, vy = np.asarray(theta, dtype=np.float64).reshape(2)
        dt = window.t - window.t_ref
        u = window.x - dt * vx
        v = window.y - dt * vy
        jac = None
        if with_jacobian:
            jac = np.zeros((len(dt), 2, 2))
            jac[:, 0, 0] = -dt
            jac[:, 1, 1] = -dt
        return WarpedEvents(u, v, np.ones(len(dt), dtype=bool), jac)


class DepthWarp:
    """Plane-sweep warp with known camera poses (camera-to-world).

    Each event pixel is back-projected to depth Z along its ray in the camera
    at the event time, moved into the reference camera and projected.  The
    reference pose defaults to the track interpolated at the window's t_ref.
    """

    kind = "depth"
    dim = 1

    def __init__(self, geometry: CameraGeometry, track: PoseTrack, ref_pose: Optional[PoseSample] = None):
        self.geometry = geometry
        self.track = track
        self.ref_pose = ref_pose
        self._cache = None

    def _relative(self, window):
        if self._cache is not None and self._cache[0] is window:
            return self._cache[1:]
        xn, yn = self.geometry.normalized(window.x, window.y)
        b = np.stack([xn, yn, np.ones_like(xn)], axis=-1)
        Rk, tk = self.track.interpolate(window.t)
        if self.ref_pose is None:
            Rr, tr = self.track.interpolate(window.t_ref)
        else:
            Rr, tr = self.ref_pose.R, np.asarray(self.ref_pose.translation, dtype=np.float64)
        Ab = np.einsum("ji,njk,nk->ni", Rr, Rk, b)
        c = (tk - tr) @ Rr
        self._cache = (window, Ab, c)
        return Ab, c

    def __call__(self, window: EventWindow, theta, with_jacobian=False) -> WarpedEvents:
        Z = float(np.asarray(theta, dtype=np.float64).reshape(1)[0])
        if not Z > 0:
            raise ValueError("depth must be positive")
        Ab, c = self._relative(window)
        P = Z * Ab + c
        u, v, valid = _project(P, self.geometry)
        jac = _project_jacobian_apply(P, Ab[:, :, None], self.geometry) if with_jacobian else None
        return WarpedEvents(u, v, valid, jac)


def _single(e: Event, t_ref):
    return EventWindow.from_arrays([e.t], [e.x], [e.y], [e.polarity], t_ref=t_ref)


def _in_bounds(x, y, geometry, margin=0.0):
    if geometry is None:
        return True
    return bool(-margin <= x <= geometry.width - 1 + margin and -margin <= y <= geometry.height - 1 + margin)


def _to_single(w: WarpedEvents, geometry, with_jacobian, margin):
    x, y = float(w.x[0]), float(w.y[0])
    ok = bool(w.valid[0]) and _in_bounds(x, y, geometry, margin)
    return WarpedEvent(x, y, ok, w.jac[0] if with_jacobian else None)


def warp_rotation(e: Event, t_ref, omega, geometry, with_jacobian=False, margin=0.0) -> WarpedEvent:
    w = RotationWarp(geometry)(_single(e, t_ref), omega, with_jacobian)
    return _to_single(w, geometry, with_jacobian, margin)


def warp_flow(e: Event, t_ref, v, geometry=None, with_jacobian=True, margin=0.0) -> WarpedEvent:
    w = FlowWarp()(_single(e, t_ref), v, with_jacobian)
    return _to_single(w, geometry, with_jacobian, margin)


def warp_depth(e: Event, pose_at_t: PoseSample, ref_pose: PoseSample, Z, geometry, with_jacobian=False, margin=0.0) -> WarpedEvent:
    # two-sample track so the event pose is exactly ``pose_at_t``
    track = PoseTrack(
        [e.t, e.t + 1.0], [pose_at_t.rotation, pose_at_t.rotation], [pose_at_t.translation, pose_at_t.translation]
    )
    w = DepthWarp(geometry, track, ref_pose)(_single(e, e.t), [Z], with_jacobian)
    return _to_single(w, geometry, with_jacobian, margin)
