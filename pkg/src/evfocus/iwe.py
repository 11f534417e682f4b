"""Image of warped events (IWE), its parameter derivatives, and the
per-pixel mean-timestamp image.

Images are plain 2-D float arrays indexed ``[row, col]`` = ``[y, x]``.

Splatting kernel
----------------
The Gaussian splat is separable and truncated at ``radius`` pixels per
axis.  To keep I(theta) continuously differentiable when an event crosses a
pixel boundary, the 1-D profile is tapered so that it and its slope vanish at
the cutoff c = radius::

    w(d) = g(d) - g(c) + (d^2 - c^2) g(c) / (2 eps^2),   |d| < c

with g(d) = exp(-d^2 / 2 eps^2).  Each axis is renormalized to unit sum, so
a splat fully inside the image deposits exactly its weight ``b_k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .events import EventWindow

__all__ = [
    "IweOptions",
    "IweWithGradient",
    "TimestampImage",
    "UnsupportedSplatError",
    "splat",
    "accumulate_iwe",
    "accumulate_iwe_with_gradient",
    "timestamp_image",
    "kernel_1d",
]


class UnsupportedSplatError(ValueError):
    pass


@dataclass(frozen=True)
class IweOptions:
    use_polarity: bool = False
    splat: str = "gaussian"  # or "bilinear"
    eps: float = 1.0
    radius: int = 3

    def __post_init__(self):
        if self.splat not in ("gaussian", "bilinear"):
            raise ValueError(f"unknown splat {self.splat!r}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.splat == "gaussian" and self.radius < int(np.ceil(2 * self.eps)):
            raise ValueError("radius must be >= ceil(2 * eps)")


@dataclass(frozen=True)
class IweWithGradient:
    image: np.ndarray
    grads: np.ndarray  # (M, H, W)
    n_retained: int = 0


@dataclass(frozen=True)
class TimestampImage:
    mean_t: np.ndarray
    count: np.ndarray


def kernel_1d(pos, eps, radius, derivative=False):
    """Tap indices and normalized weights of the 1-D splat profile.

    Returns ``(idx, k)`` or ``(idx, k, dk)`` with arrays of shape (N, 2*radius)
    where ``dk`` is the derivative of the weights with respect to ``pos``.
    """
    pos = np.asarray(pos, dtype=np.float64)
    base = np.floor(pos)
    offs = np.arange(-radius + 1, radius + 1)
    idx = base[:, None] + offs[None, :]
    d = idx - pos[:, None]
    c = float(radius)
    s2 = eps * eps
    gc = np.exp(-c * c / (2 * s2))
    g = np.exp(-d * d / (2 * s2))
    inside = np.abs(d) < c
    w = np.where(inside, np.maximum(g - gc + (d * d - c * c) * gc / (2 * s2), 0.0), 0.0)
    S = w.sum(axis=1, keepdims=True)
    k = w / S
    if not derivative:
        return idx.astype(np.intp), k
    # dw/dd, and dd/dpos = -1
    wd = np.where(inside, -d / s2 * g + d * gc / s2, 0.0)
    dw = -wd
    dk = (dw - k * dw.sum(axis=1, keepdims=True)) / S
    return idx.astype(np.intp), k, dk


def _weights(window: EventWindow, options: IweOptions):
    if options.use_polarity:
        return np.asarray(window.p, dtype=np.float64)
    return np.ones(len(window))


def splat(xw, yw, b, shape, options: IweOptions, jac=None, valid=None):
    """Accumulate weighted points into an image (and derivative images).

    Parameters
    ----------
    xw, yw : arrays of warped coordinates
    b : per-event weights
    shape : (H, W)
    jac : optional (N, 2, M) Jacobian of (xw, yw) w.r.t. the parameters

    Returns
    -------
    image, grads (or None), number of events whose splat touches the image
    """
    H, W = shape
    xw = np.asarray(xw, dtype=np.float64)
    yw = np.asarray(yw, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if valid is not None:
        keep = np.asarray(valid, dtype=bool) & np.isfinite(xw) & np.isfinite(yw)
    else:
        keep = np.isfinite(xw) & np.isfinite(yw)
    if options.splat == "gaussian":
        margin = options.radius
    else:
        margin = 1.0
    keep &= (xw > -margin) & (xw < W - 1 + margin) & (yw > -margin) & (yw < H - 1 + margin)
    xw, yw, b = xw[keep], yw[keep], b[keep]
    if jac is not None:
        jac = jac[keep]
    n = len(xw)
    if n == 0:
        img = np.zeros(shape)
        grads = None if jac is None else np.zeros((jac.shape[2], H, W))
        return img, grads, 0

    if options.splat == "bilinear":
        if jac is not None:
            raise UnsupportedSplatError("bilinear splatting has no smooth derivative; use the gaussian splat")
        x0 = np.floor(xw)
        y0 = np.floor(yw)
        fx, fy = xw - x0, yw - y0
        ix = np.stack([x0, x0 + 1], axis=1).astype(np.intp)
        iy = np.stack([y0, y0 + 1], axis=1).astype(np.intp)
        kx = np.stack([1 - fx, fx], axis=1)
        ky = np.stack([1 - fy, fy], axis=1)
        dkx = dky = None
    else:
        ix, kx, dkx = kernel_1d(xw, options.eps, options.radius, derivative=True)
        iy, ky, dky = kernel_1d(yw, options.eps, options.radius, derivative=True)

    # accumulate on a padded canvas so taps falling outside need no masking
    pad = int(ix.shape[1]) + 1
    Wp = W + 2 * pad
    flat = ((iy + pad) * Wp)[:, :, None] + (ix + pad)[:, None, :]
    flat = flat.reshape(n, -1)
    size = (H + 2 * pad) * Wp

    def _acc(weights):
        full = np.bincount(flat.ravel(), weights=weights.ravel(), minlength=size)
        return full.reshape(H + 2 * pad, Wp)[pad:pad + H, pad:pad + W]

    img = _acc(b[:, None, None] * ky[:, :, None] * kx[:, None, :])
    grads = None
    if jac is not None:
        M = jac.shape[2]
        grads = np.empty((M, H, W))
        bky = b[:, None] * ky
        bdky = b[:, None] * dky
        for j in range(M):
            ax = bky * jac[:, 0, j, None]
            ay = bdky * jac[:, 1, j, None]
            grads[j] = _acc(ax[:, :, None] * dkx[:, None, :] + ay[:, :, None] * kx[:, None, :])
    return img, grads, n


def accumulate_iwe(window: EventWindow, warp, theta, options: IweOptions = IweOptions(), shape=None):
    """IWE at parameters ``theta``: sum of unit-mass splats of b_k at x'_k."""
    shape = _shape(warp, shape)
    w = warp(window, theta, with_jacobian=False)
    img, _, _ = splat(w.x, w.y, _weights(window, options), shape, options, valid=w.valid)
    return img


def accumulate_iwe_with_gradient(window: EventWindow, warp, theta, options: IweOptions = IweOptions(), shape=None):
    """IWE plus one derivative image dI/dtheta_j per parameter."""
    if options.splat != "gaussian":
        raise UnsupportedSplatError("IWE gradients require the gaussian splat")
    shape = _shape(warp, shape)
    w = warp(window, theta, with_jacobian=True)
    img, grads, n = splat(w.x, w.y, _weights(window, options), shape, options, jac=w.jac, valid=w.valid)
    return IweWithGradient(img, grads, n)


def timestamp_image(window: EventWindow, warp, theta, shape=None):
    """Per-pixel mean timestamp (window start = 0) with nearest-pixel binning."""
    H, W = _shape(warp, shape)
    w = warp(window, theta, with_jacobian=False)
    ix = np.round(w.x)
    iy = np.round(w.y)
    keep = w.valid & (ix >= 0) & (ix < W) & (iy >= 0) & (iy < H)
    t0 = window.t[0] if len(window) else 0.0
    flat = (iy[keep] * W + ix[keep]).astype(np.intp)
    count = np.bincount(flat, minlength=H * W).astype(np.float64).reshape(H, W)
    tsum = np.bincount(flat, weights=window.t[keep] - t0, minlength=H * W).reshape(H, W)
    mean_t = np.divide(tsum, count, out=np.zeros_like(tsum), where=count > 0)
    return TimestampImage(mean_t, count)


def _shape(warp, shape):
    if shape is not None:
        return tuple(shape)
    geometry = getattr(warp, "geometry", None)
    if geometry is None:
        raise ValueError("image shape is required for warps without a camera geometry")
    return (geometry.height, geometry.width)
