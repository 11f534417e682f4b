"""Camera calibration, pose tracks and SO(3) helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

__all__ = [
    "CameraGeometry",
    "PoseSample",
    "PoseTrack",
    "load_calib",
    "load_poses",
    "save_calib",
    "save_poses",
    "angular_velocity_from_poses",
    "hat",
    "so3_exp",
    "so3_right_jacobian",
    "so3_left_jacobian",
]


def hat(v):
    """Skew-symmetric matrices of shape (..., 3, 3) from vectors (..., 3)."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _rodrigues_coeffs(theta):
    # a = sin/th, b = (1-cos)/th^2, c = (th-sin)/th^3, with series near 0
    small = theta < 1e-4
    th = np.where(small, 1.0, theta)
    th2 = theta * theta
    a = np.where(small, 1 - th2 / 6 + th2 * th2 / 120, np.sin(th) / th)
    b = np.where(small, 0.5 - th2 / 24 + th2 * th2 / 720, (1 - np.cos(th)) / th**2)
    c = np.where(small, 1 / 6 - th2 / 120 + th2 * th2 / 5040, (th - np.sin(th)) / th**3)
    return a, b, c


def so3_exp(phi):
    """Rotation matrices exp(hat(phi)) by Rodrigues' formula, batched."""
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.linalg.norm(phi, axis=-1)
    a, b, _ = _rodrigues_coeffs(theta)
    K = hat(phi)
    K2 = K @ K
    return np.eye(3) + a[..., None, None] * K + b[..., None, None] * K2


def so3_right_jacobian(phi):
    """Right Jacobian J_r with exp(hat(phi + d)) ~= exp(hat(phi)) exp(hat(J_r d))."""
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.linalg.norm(phi, axis=-1)
    _, b, c = _rodrigues_coeffs(theta)
    K = hat(phi)
    return np.eye(3) - b[..., None, None] * K + c[..., None, None] * (K @ K)


def so3_left_jacobian(phi):
    """Left Jacobian J_l = R J_r, with exp(hat(phi + d)) ~= exp(hat(J_l d)) exp(hat(phi))."""
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.linalg.norm(phi, axis=-1)
    _, b, c = _rodrigues_coeffs(theta)
    K = hat(phi)
    return np.eye(3) + b[..., None, None] * K + c[..., None, None] * (K @ K)


@dataclass(frozen=True)
class CameraGeometry:
    """Pinhole intrinsics with radial-tangential distortion (k1, k2, p1, p2, k3)."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    dist: tuple = field(default=(0.0, 0.0, 0.0, 0.0, 0.0))

    def __post_init__(self):
        object.__setattr__(self, "dist", tuple(float(d) for d in self.dist) + (0.0,) * (5 - len(self.dist)))
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the sensor")

    @classmethod
    def pinhole(cls, width=240, height=180, f=200.0):
        return cls(width, height, f, f, (width - 1) / 2.0, (height - 1) / 2.0)

    @property
    def K(self):
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    @property
    def has_distortion(self):
        return any(d != 0.0 for d in self.dist)

    def distort_normalized(self, xn, yn):
        """Apply lens distortion to normalized coordinates, return pixels."""
        k1, k2, p1, p2, k3 = self.dist
        xn = np.asarray(xn, dtype=np.float64)
        yn = np.asarray(yn, dtype=np.float64)
        r2 = xn * xn + yn * yn
        radial = 1 + r2 * (k1 + r2 * (k2 + r2 * k3))
        xd = xn * radial + 2 * p1 * xn * yn + p2 * (r2 + 2 * xn * xn)
        yd = yn * radial + p1 * (r2 + 2 * yn * yn) + 2 * p2 * xn * yn
        return self.fx * xd + self.cx, self.fy * yd + self.cy

    def undistort_iterative(self, u, v, iterations=30):
        """Normalized (undistorted) coordinates of raw pixels ``(u, v)``."""
        xd = (np.asarray(u, dtype=np.float64) - self.cx) / self.fx
        yd = (np.asarray(v, dtype=np.float64) - self.cy) / self.fy
        if not self.has_distortion:
            return xd, yd
        k1, k2, p1, p2, k3 = self.dist
        x, y = xd.copy(), yd.copy()
        for _ in range(iterations):
            r2 = x * x + y * y
            radial = 1 + r2 * (k1 + r2 * (k2 + r2 * k3))
            dx = 2 * p1 * x * y + p2 * (r2 + 2 * x * x)
            dy = p1 * (r2 + 2 * y * y) + 2 * p2 * x * y
            x = (xd - dx) / radial
            y = (yd - dy) / radial
        return x, y

    @cached_property
    def undistortion_lut(self):
        """Per-pixel normalized coordinates, shape (height, width, 2)."""
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        xn, yn = self.undistort_iterative(u, v)
        lut = np.stack([xn, yn], axis=-1)
        lut.flags.writeable = False
        return lut

    def normalized(self, u, v):
        """Undistorted normalized coordinates; uses the lookup table for integer pixels."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if not self.has_distortion:
            return (u - self.cx) / self.fx, (v - self.cy) / self.fy
        ui, vi = np.round(u), np.round(v)
        inside = (ui >= 0) & (ui < self.width) & (vi >= 0) & (vi < self.height)
        if np.all(inside & (ui == u) & (vi == v)):
            lut = self.undistortion_lut
            xy = lut[vi.astype(np.intp), ui.astype(np.intp)]
            return xy[..., 0], xy[..., 1]
        return self.undistort_iterative(u, v)

    def project(self, P):
        """Pinhole projection (no distortion) of camera-frame points (..., 3)."""
        P = np.asarray(P, dtype=np.float64)
        return self.fx * P[..., 0] / P[..., 2] + self.cx, self.fy * P[..., 1] / P[..., 2] + self.cy


def load_calib(path, width=240, height=180):
    """Read ``calib.txt`` ("fx fy cx cy k1 k2 p1 p2 k3"); sensor size is not stored in the file."""
    vals = [float(s) for s in Path(path).read_text().split()]
    if len(vals) not in (4, 8, 9):
        raise ValueError(f"{path}: expected 4, 8 or 9 calibration values, got {len(vals)}")
    fx, fy, cx, cy = vals[:4]
    return CameraGeometry(width, height, fx, fy, cx, cy, tuple(vals[4:]))


def save_calib(path, geometry):
    vals = [geometry.fx, geometry.fy, geometry.cx, geometry.cy, *geometry.dist]
    Path(path).write_text(" ".join(f"{v:.9g}" for v in vals) + "\n")


@dataclass(frozen=True)
class PoseSample:
    t: float
    rotation: tuple  # unit quaternion (qx, qy, qz, qw)
    translation: tuple

    def __post_init__(self):
        if abs(np.linalg.norm(self.rotation) - 1.0) > 1e-6:
            raise ValueError("pose quaternion must have unit norm")

    @property
    def R(self):
        return Rotation.from_quat(self.rotation).as_matrix()


class PoseTrack:
    """Time-sorted camera-to-world poses with slerp/linear interpolation."""

    def __init__(self, t, quat, trans):
        t = np.asarray(t, dtype=np.float64)
        quat = np.asarray(quat, dtype=np.float64).reshape(-1, 4)
        trans = np.asarray(trans, dtype=np.float64).reshape(-1, 3)
        if not (len(t) == len(quat) == len(trans)):
            raise ValueError("pose arrays must have equal length")
        if len(t) > 1 and np.any(np.diff(t) < 0):
            raise ValueError("poses must be sorted by time")
        norms = np.linalg.norm(quat, axis=1)
        if np.any(np.abs(norms - 1) > 1e-6):
            raise ValueError("pose quaternions must have unit norm")
        self.t = t
        self.quat = quat
        self.trans = trans

    @classmethod
    def from_samples(cls, samples):
        samples = list(samples)
        return cls([s.t for s in samples], [s.rotation for s in samples], [s.translation for s in samples])

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i):
        return PoseSample(float(self.t[i]), tuple(self.quat[i]), tuple(self.trans[i]))

    def reversed_time(self):
        """Track with t -> -t (used to check time-reversal behavior)."""
        return PoseTrack(-self.t[::-1], self.quat[::-1], self.trans[::-1])

    @cached_property
    def _slerp(self):
        return Slerp(self.t, Rotation.from_quat(self.quat))

    def interpolate(self, t):
        """Rotation matrices (..., 3, 3) and translations (..., 3) at times ``t``."""
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < self.t[0]) or np.any(t > self.t[-1]):
            raise ValueError("time outside the pose track")
        R = self._slerp(t.reshape(-1)).as_matrix().reshape(t.shape + (3, 3))
        trans = np.stack([np.interp(t, self.t, self.trans[:, k]) for k in range(3)], axis=-1)
        return R, trans

    def sample(self, t):
        R, trans = self.interpolate(float(t))
        return PoseSample(float(t), tuple(Rotation.from_matrix(R).as_quat()), tuple(trans))


def load_poses(path):
    """Read ``groundtruth.txt`` lines ``t tx ty tz qx qy qz qw``."""
    data = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if data.size == 0:
        raise ValueError(f"{path}: empty pose file")
    if data.shape[1] != 8:
        raise ValueError(f"{path}: expected 8 columns per pose")
    q = data[:, 4:8]
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    return PoseTrack(data[:, 0], q, data[:, 1:4])


def save_poses(path, track):
    with open(path, "w", newline="\n") as fh:
        for t, tr, q in zip(track.t, track.trans, track.quat):
            fh.write(f"{t:.9f} " + " ".join(f"{v:.9f}" for v in (*tr, *q)) + "\n")


def angular_velocity_from_poses(track: PoseTrack, t):
    """Body-frame angular velocity (rad/s) from the two poses bracketing ``t``.

    Uses the log map of the relative rotation R_i^T R_{i+1} divided by the
    time gap (constant velocity between samples).
    """
    if len(track) < 2:
        raise ValueError("need at least two poses")
    if t < track.t[0] or t > track.t[-1]:
        raise ValueError(f"time {t} outside the pose track [{track.t[0]}, {track.t[-1]}]")
    i = int(np.searchsorted(track.t, t, side="right")) - 1
    i = min(max(i, 0), len(track) - 2)
    dt = track.t[i + 1] - track.t[i]
    if dt <= 0 or (i > 0 and track.t[i] == track.t[i - 1] == t):
        raise ValueError(f"degenerate pose interval at t={track.t[i]} (duplicate timestamps)")
    Ra = Rotation.from_quat(track.quat[i])
    Rb = Rotation.from_quat(track.quat[i + 1])
    return (Ra.inv() * Rb).as_rotvec() / dt
