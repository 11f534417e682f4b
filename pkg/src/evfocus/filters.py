"""Linear image operators shared by the focus losses.

All operators act on the last two axes, so a stack of derivative images
(M, H, W) is filtered in one call.  Finite differences replicate edge pixels;
Gaussian smoothing pads with zeros (no events outside the image).
"""

import numpy as np
from scipy import ndimage

_CENTRAL = np.array([-0.5, 0.0, 0.5])
_SECOND = np.array([1.0, -2.0, 1.0])


def dx(img):
    return ndimage.correlate1d(img, _CENTRAL, axis=-1, mode="nearest")


def dy(img):
    return ndimage.correlate1d(img, _CENTRAL, axis=-2, mode="nearest")


def dxx(img):
    return ndimage.correlate1d(img, _SECOND, axis=-1, mode="nearest")


def dyy(img):
    return ndimage.correlate1d(img, _SECOND, axis=-2, mode="nearest")


def dxy(img):
    return dx(dy(img))


def laplacian(img):
    """5-point Laplacian (equals dxx + dyy)."""
    return dxx(img) + dyy(img)


def gaussian_kernel_1d(sigma, truncate=4.0):
    radius = max(1, int(np.ceil(truncate * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian(img, sigma, truncate=4.0):
    """Normalized, truncated Gaussian smoothing with zero padding."""
    k = gaussian_kernel_1d(sigma, truncate)
    out = ndimage.correlate1d(img, k, axis=-1, mode="constant")
    return ndimage.correlate1d(out, k, axis=-2, mode="constant")


def local_mean(img, sigma, truncate=4.0):
    """Gaussian-weighted local mean; weights are renormalized over the pixels
    inside the image, so a constant image is left unchanged."""
    img = np.asarray(img, dtype=np.float64)
    mass = gaussian(np.ones(img.shape[-2:]), sigma, truncate)
    return gaussian(img, sigma, truncate) / mass


def gaussian_kernel_2d(sigma, radius):
    k = gaussian_kernel_1d(sigma, truncate=radius / sigma)
    if len(k) != 2 * radius + 1:
        x = np.arange(-radius, radius + 1, dtype=np.float64)
        k = np.exp(-0.5 * (x / sigma) ** 2)
        k /= k.sum()
    return np.outer(k, k)


def moran_weights(sigma=1.0, radius=3):
    """Gaussian neighbor weights with a zero at the origin, renormalized to sum 1."""
    G = gaussian_kernel_2d(sigma, radius)
    c = G[radius, radius]
    w = G.copy()
    w[radius, radius] = 0.0
    return w / (1.0 - c)


def correlate2d(img, kernel):
    """2-D correlation with zero padding, applied to each image in a stack."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return ndimage.correlate(img, kernel, mode="constant")
    return np.stack([ndimage.correlate(s, kernel, mode="constant") for s in img])
