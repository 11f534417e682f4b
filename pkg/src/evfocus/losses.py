"""Focus loss functions of an image of warped events.

Every loss is implemented once as a function ``f(I, dI, spec)`` returning the
value and, when ``dI`` (a stack of derivative images dI/dtheta_j, shape
(M, H, W)) is given, the gradient dLoss/dtheta obtained by pushing ``dI``
through the same operations (forward-mode chain rule).  Losses that have no
closed-form derivative here (Moran's I, Geary's C, mean timestamp) report
``analytic=False`` and the optimizer differentiates them numerically.

Conventions: integrals over the image domain are pixel sums, image means
divide by the number of pixels.  Only the ranking of a loss across theta
matters, so these constant factors are fixed once and not tuned.

Loss names (stable, used by the CLI and CSV headers)::

    variance mean-square mad mav entropy area-{exp,gaussian,lorentzian,hyperbolic}
    range-{exp,gaussian,lorentzian,hyperbolic} local-variance local-ms local-mad
    local-mav moran geary gradient laplacian hessian dog log var-laplacian
    var-gradient var-sq-gradient mean-timestamp
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import erf

from . import filters
from .iwe import IweWithGradient, TimestampImage

__all__ = [
    "KINDS",
    "LOSS_NAMES",
    "LossSpec",
    "LossEval",
    "SmoothedPdf",
    "DegenerateDistributionError",
    "EmptySupportError",
    "evaluate",
    "loss_gradient",
    "variance",
    "mean_square",
    "mad",
    "mav",
    "smooth_abs",
    "entropy",
    "area",
    "range_support",
    "smoothed_pdf",
    "local_stat",
    "moran_i",
    "geary_c",
    "derivative_loss",
    "composite_loss",
    "mean_timestamp_loss",
    "WEIGHTS",
]


class DegenerateDistributionError(ValueError):
    """The image PDF is undefined (zero range) or the image has zero variance."""


class EmptySupportError(ValueError):
    """No occupied pixel in a timestamp image."""


# ---------------------------------------------------------------------------
# weighting functions rho and their primitives F (F(0) = 0 for all four)

def _rho_exp(x):
    return np.exp(-x)


def _F_exp(x):
    return -np.expm1(-x)


def _rho_gauss(x):
    return 2.0 / math.sqrt(math.pi) * np.exp(-x * x)


def _rho_lorentz(x):
    return 2.0 / (math.pi * (1.0 + x * x))


def _F_lorentz(x):
    return 2.0 / math.pi * np.arctan(x)


def _rho_hyper(x):
    return 1.0 / np.cosh(x) ** 2


WEIGHTS = {
    "exp": (_rho_exp, _F_exp),
    "gaussian": (_rho_gauss, erf),
    "lorentzian": (_rho_lorentz, _F_lorentz),
    "hyperbolic": (_rho_hyper, np.tanh),
}

# kind -> (goal, spatial)
KINDS = {
    "variance": ("max", False),
    "mean-square": ("max", False),
    "mad": ("max", False),
    "mav": ("max", False),
    "entropy": ("max", False),
    "area": ("min", False),
    "range": ("max", False),
    "local-variance": ("max", True),
    "local-ms": ("max", True),
    "local-mad": ("max", True),
    "local-mav": ("max", True),
    "moran": ("min", True),
    "geary": ("max", True),
    "gradient": ("max", True),
    "laplacian": ("max", True),
    "hessian": ("max", True),
    "dog": ("max", True),
    "log": ("max", True),
    "var-laplacian": ("max", True),
    "var-gradient": ("max", True),
    "var-sq-gradient": ("max", True),
    "mean-timestamp": ("min", False),
}

_NO_ANALYTIC = {"moran", "geary", "mean-timestamp"}


def _all_names():
    names = []
    for kind in KINDS:
        if kind in ("area", "range"):
            names.extend(f"{kind}-{w}" for w in WEIGHTS)
        else:
            names.append(kind)
    return tuple(names)


@dataclass(frozen=True)
class LossSpec:
    """Which loss to evaluate and its parameters.

    ``sigma`` is the local-statistics kernel width, ``sigma1``/``sigma2`` the
    DoG widths (LoG uses ``sigma2 = log_ratio * sigma1``), ``sigma_m`` the
    Moran/Geary neighbor weight width, ``bins``/``sigma_bins`` the PDF
    discretization for entropy and range.  ``sign_k`` selects tanh(k x) in
    place of sign(x) in the L1 gradients (None: exact sign).  ``abs_delta``
    is the half-width of the smoothed absolute value used for the centered
    deviations of MAD and local MAD (0: exact ``|x|``).
    """

    kind: str
    weight: str = "exp"
    sigma: float = 3.0
    sigma1: float = 1.0
    sigma2: float = 3.0
    log_ratio: float = 1.6
    sigma_m: float = 1.0
    moran_radius: int = 3
    bins: int = 200
    sigma_bins: float = 5.0
    area_scale: float = 1.0
    sign_k: Optional[float] = None
    abs_delta: float = 0.02

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.weight not in WEIGHTS:
            raise ValueError(f"unknown weight {self.weight!r}")
        for name in ("sigma", "sigma1", "sigma2", "sigma_m", "sigma_bins", "area_scale", "log_ratio"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if self.abs_delta < 0:
            raise ValueError("abs_delta must be non-negative")

    @classmethod
    def parse(cls, name, **params):
        """Spec from a stable name such as ``"variance"`` or ``"area-exp"``."""
        for kind in ("area", "range"):
            if name.startswith(kind + "-"):
                return cls(kind, weight=name[len(kind) + 1 :], **params)
        if name in ("area", "range"):
            return cls(name, **params)
        if name not in KINDS:
            raise ValueError(f"unknown loss {name!r}; known: {', '.join(LOSS_NAMES)}")
        return cls(name, **params)

    @property
    def name(self):
        if self.kind in ("area", "range"):
            return f"{self.kind}-{self.weight}"
        return self.kind

    @property
    def goal(self):
        return KINDS[self.kind][0]

    @property
    def sign(self):
        """+1 if the loss is maximized, -1 if minimized."""
        return 1.0 if self.goal == "max" else -1.0

    @property
    def spatial(self):
        return KINDS[self.kind][1]

    @property
    def analytic(self):
        return self.kind not in _NO_ANALYTIC

    def with_params(self, **params):
        return replace(self, **params)


LOSS_NAMES = _all_names()


@dataclass(frozen=True)
class LossEval:
    value: float
    gradient: Optional[np.ndarray] = None
    method: Optional[str] = None  # "analytic" or "finite-difference"


# ---------------------------------------------------------------------------
# helpers

def _sum2(a):
    """Sum over the two image axes (keeps leading stack axes)."""
    return a.sum(axis=(-2, -1))


def _mean2(a):
    return a.mean(axis=(-2, -1))


def _sign(x, k):
    return np.sign(x) if k is None else np.tanh(k * x)


def smooth_abs(x, delta):
    """C2 absolute value and its derivative.

    Equal to ``|x|`` for ``|x| >= delta``; inside, the even polynomial
    ``delta * (15/8 s^2 - 5/4 s^4 + 3/8 s^6)`` with ``s = x / delta``, which
    is 0 at 0 and monotone in ``|x|``.
    """
    x = np.asarray(x, dtype=np.float64)
    if delta <= 0:
        return np.abs(x), np.sign(x)
    s = x / delta
    s2 = s * s
    inside = s2 < 1.0
    val = np.where(inside, delta * s2 * (1.875 - s2 * (1.25 - 0.375 * s2)), np.abs(x))
    der = np.where(inside, s * (3.75 - s2 * (5.0 - 2.25 * s2)), np.sign(x))
    return val, der


def _centered_abs(x, spec):
    a, d = smooth_abs(x, spec.abs_delta)
    if spec.sign_k is not None:
        d = np.tanh(spec.sign_k * x)
    return a, d


def _as_image(I):
    I = np.asarray(I, dtype=np.float64)
    if I.ndim not in (1, 2):
        raise ValueError("expected a 2-D image")
    return I


# ---------------------------------------------------------------------------
# global statistics

def _variance(I, dI, spec):
    Ic = I - I.mean()
    val = float(np.mean(Ic * Ic))
    if dI is None:
        return val, None
    dIc = dI - _mean2(dI)[:, None, None]
    return val, _mean2(2.0 * Ic * dIc)


def _mean_square(I, dI, spec):
    val = float(np.mean(I * I))
    if dI is None:
        return val, None
    return val, _mean2(2.0 * I * dI)


def _mad(I, dI, spec):
    Ic = I - I.mean()
    a, d = _centered_abs(Ic, spec)
    val = float(np.mean(a))
    if dI is None:
        return val, None
    dIc = dI - _mean2(dI)[:, None, None]
    return val, _mean2(d * dIc)


def _mav(I, dI, spec):
    val = float(np.mean(np.abs(I)))
    if dI is None:
        return val, None
    return val, _mean2(_sign(I, spec.sign_k) * dI)


def _area(I, dI, spec):
    rho, F = WEIGHTS[spec.weight]
    if np.min(I) < -1e-12:
        raise ValueError("image area is defined for non-negative images; split events by polarity")
    s = spec.area_scale
    val = float(np.sum(F(I / s)))
    if dI is None:
        return val, None
    return val, _sum2((rho(I / s) / s) * dI)


# ---------------------------------------------------------------------------
# image PDF (entropy, range)

@dataclass(frozen=True)
class SmoothedPdf:
    """Gaussian-smoothed histogram of image values sampled on ``z``.

    ``z`` are ``bins`` equally spaced nodes spanning [min I, max I];
    ``p`` integrates to one with the rectangle rule (sum(p) * dz = 1).
    """

    z: np.ndarray
    p: np.ndarray
    dp: np.ndarray

    @property
    def dz(self):
        return float(self.z[1] - self.z[0])


_CHUNK = 1 << 21


def _pdf_setup(I, spec):
    v = I.reshape(-1)
    a, b = float(v.min()), float(v.max())
    scale = max(1.0, abs(a), abs(b))
    if not (b - a) > 1e-12 * scale:
        raise DegenerateDistributionError("image has zero range; its PDF is undefined")
    B = spec.bins
    dz = (b - a) / (B - 1)
    z = a + dz * np.arange(B)
    sigma = spec.sigma_bins * dz
    return v, a, b, B, dz, z, sigma


def _kde(u, cnt, z, sigma, want_moments=False):
    """q_j = mean_x N(z_j - v_x; sigma) from the distinct values ``u`` with
    multiplicities ``cnt``, and optionally the sums needed for the derivatives
    with respect to z_j and sigma."""
    N = cnt.sum()
    B = len(z)
    q = np.zeros(B)
    s_r = np.zeros(B)
    s_r2 = np.zeros(B)
    step = max(1, _CHUNK // B)
    c = 1.0 / math.sqrt(2 * math.pi)
    for i in range(0, len(u), step):
        r = (z[None, :] - u[i : i + step, None]) / sigma
        phi = c * np.exp(-0.5 * r * r)
        w = cnt[i : i + step]
        q += w @ phi
        if want_moments:
            rphi = r * phi
            s_r += w @ rphi
            s_r2 += w @ (r * rphi)
    q /= N * sigma
    if want_moments:
        # sum_x r phi and sum_x (r^2 - 1) phi, scaled like q
        return q, s_r / (N * sigma), (s_r2 / (N * sigma)) - q
    return q


def _pixel_weights(u, N, z, sigma, lam):
    """g(v) = sum_j lam_j dq_j/dv = sum_j lam_j r phi / (N sigma^2) at the values ``u``."""
    B = len(z)
    out = np.empty(len(u))
    step = max(1, _CHUNK // B)
    c = 1.0 / math.sqrt(2 * math.pi)
    for i in range(0, len(u), step):
        r = (z[None, :] - u[i : i + step, None]) / sigma
        out[i : i + step] = (r * (c * np.exp(-0.5 * r * r))) @ lam
    return out / (N * sigma * sigma)


def smoothed_pdf(I, bins=200, sigma_bins=5.0):
    """Unit-area PDF of the pixel values, histogram smoothed by a Gaussian of
    ``sigma_bins`` bins (evaluated exactly as a kernel density on the bin nodes)."""
    spec = LossSpec("entropy", bins=bins, sigma_bins=sigma_bins)
    v, a, b, B, dz, z, sigma = _pdf_setup(_as_image(I), spec)
    u, cnt = np.unique(v, return_counts=True)
    q, m1, _ = _kde(u, cnt.astype(np.float64), z, sigma, want_moments=True)
    S = q.sum() * dz
    # dq/dz_j = -(1/(N sigma^2)) sum r phi
    return SmoothedPdf(z, q / S, -m1 / sigma / S)


def _pdf_functional(I, dI, spec, f, fprime):
    """L = sum_j f(p_j) dz with p the renormalized smoothed PDF.

    The gradient accounts for the kernel centers (pixel values) and for the
    bin grid, whose end points are the image min and max.
    """
    v, a, b, B, dz, z, sigma = _pdf_setup(I, spec)
    u, inv, cnt = np.unique(v, return_inverse=True, return_counts=True)
    cnt = cnt.astype(np.float64)
    if dI is None:
        q = _kde(u, cnt, z, sigma)
        p = q / (q.sum() * dz)
        return float(np.sum(f(p)) * dz), None

    q, m1, m2 = _kde(u, cnt, z, sigma, want_moments=True)
    Q = q.sum()
    S = Q * dz
    p = q / S
    fp = f(p)
    fpp = fprime(p)
    val = float(fp.sum() * dz)

    # dL/dq_k with dz held fixed, through the renormalization
    lam = (dz / S) * (fpp - np.sum(fpp * p) * dz)
    # explicit dependence on dz at fixed q
    dL_ddz = fp.sum() - np.sum(fpp * p)
    dq_dz = -m1 / sigma          # d q_j / d z_j
    dq_dsig = m2 / sigma         # d q_j / d sigma
    j = np.arange(B)
    t = j / (B - 1)
    # a = min, b = max: dz/da = -1/(B-1), dz_j/da = 1 - t_j, dsigma/da = s dz/da
    ddz_da = -1.0 / (B - 1)
    ddz_db = 1.0 / (B - 1)
    s = spec.sigma_bins
    dL_da = np.sum(lam * (dq_dz * (1 - t) + dq_dsig * s * ddz_da)) + dL_ddz * ddz_da
    dL_db = np.sum(lam * (dq_dz * t + dq_dsig * s * ddz_db)) + dL_ddz * ddz_db

    g = _pixel_weights(u, len(v), z, sigma, lam)[inv.reshape(-1)]
    M = dI.shape[0]
    dflat = dI.reshape(M, -1)
    grad = dflat @ g
    ia = int(np.argmin(v))
    ib = int(np.argmax(v))
    grad = grad + dL_da * dflat[:, ia] + dL_db * dflat[:, ib]
    return val, grad


_TINY = 1e-300


def _entropy(I, dI, spec):
    def f(p):
        return -p * np.log(np.maximum(p, _TINY))

    def fprime(p):
        return -(np.log(np.maximum(p, _TINY)) + 1.0)

    return _pdf_functional(I, dI, spec, f, fprime)


def _range(I, dI, spec):
    rho, F = WEIGHTS[spec.weight]
    return _pdf_functional(I, dI, spec, F, rho)


# ---------------------------------------------------------------------------
# local statistics (Gaussian-weighted neighborhoods), aggregated by summation

def _local_variance(I, dI, spec):
    G = lambda a: filters.local_mean(a, spec.sigma)  # noqa: E731
    m = G(I)
    val = float(np.sum(G(I * I) - m * m))
    if dI is None:
        return val, None
    return val, _sum2(G(2.0 * I * dI) - 2.0 * m * G(dI))


def _local_ms(I, dI, spec):
    G = lambda a: filters.local_mean(a, spec.sigma)  # noqa: E731
    val = float(np.sum(G(I * I)))
    if dI is None:
        return val, None
    return val, _sum2(G(2.0 * I * dI))


def _local_mad(I, dI, spec):
    G = lambda a: filters.local_mean(a, spec.sigma)  # noqa: E731
    Ic = I - G(I)
    a, d = _centered_abs(Ic, spec)
    val = float(np.sum(G(a)))
    if dI is None:
        return val, None
    dIc = dI - G(dI)
    return val, _sum2(G(d * dIc))


def _local_mav(I, dI, spec):
    G = lambda a: filters.local_mean(a, spec.sigma)  # noqa: E731
    val = float(np.sum(G(np.abs(I))))
    if dI is None:
        return val, None
    return val, _sum2(G(_sign(I, spec.sign_k) * dI))


# ---------------------------------------------------------------------------
# spatial autocorrelation

def _standardize(I):
    z = I - I.mean()
    var = float(np.mean(z * z))
    if not var > 0:
        raise DegenerateDistributionError("image has zero variance")
    return z / math.sqrt(var)


def _moran(I, dI, spec):
    zs = _standardize(I)
    w = filters.moran_weights(spec.sigma_m, spec.moran_radius)
    W = float(np.sum(filters.correlate2d(np.ones_like(I), w)))
    return float(np.sum(zs * filters.correlate2d(zs, w)) / W), None


def _geary(I, dI, spec):
    zs = _standardize(I)
    w = filters.moran_weights(spec.sigma_m, spec.moran_radius)
    ones = filters.correlate2d(np.ones_like(I), w)
    W = float(np.sum(ones))
    z2 = zs * zs
    c = z2 * ones + filters.correlate2d(z2, w) - 2.0 * zs * filters.correlate2d(zs, w)
    N = I.size
    return float(0.5 * np.sum(c) / W * (N - 1) / N), None


# ---------------------------------------------------------------------------
# derivative-based losses

def _gradient(I, dI, spec):
    Ix, Iy = filters.dx(I), filters.dy(I)
    val = float(np.sum(Ix * Ix + Iy * Iy))
    if dI is None:
        return val, None
    return val, _sum2(2.0 * (Ix * filters.dx(dI) + Iy * filters.dy(dI)))


def _laplacian(I, dI, spec):
    L = filters.laplacian(I)
    val = float(np.sum(L * L))
    if dI is None:
        return val, None
    return val, _sum2(2.0 * L * filters.laplacian(dI))


def _hessian(I, dI, spec):
    Ixx, Iyy, Ixy = filters.dxx(I), filters.dyy(I), filters.dxy(I)
    val = float(np.sum(Ixx * Ixx + Iyy * Iyy + 2.0 * Ixy * Ixy))
    if dI is None:
        return val, None
    g = 2.0 * (Ixx * filters.dxx(dI) + Iyy * filters.dyy(dI) + 2.0 * Ixy * filters.dxy(dI))
    return val, _sum2(g)


def _band_pass(I, dI, s1, s2):
    D = filters.local_mean(I, s1) - filters.local_mean(I, s2)
    val = float(np.sum(D * D))
    if dI is None:
        return val, None
    dD = filters.local_mean(dI, s1) - filters.local_mean(dI, s2)
    return val, _sum2(2.0 * D * dD)


def _dog(I, dI, spec):
    return _band_pass(I, dI, spec.sigma1, spec.sigma2)


def _log(I, dI, spec):
    return _band_pass(I, dI, spec.sigma1, spec.log_ratio * spec.sigma1)


def _var_of(F, dF):
    Fc = F - F.mean()
    val = float(np.mean(Fc * Fc))
    if dF is None:
        return val, None
    dFc = dF - _mean2(dF)[:, None, None]
    return val, _mean2(2.0 * Fc * dFc)


def _var_laplacian(I, dI, spec):
    return _var_of(filters.laplacian(I), None if dI is None else filters.laplacian(dI))


def _var_sq_gradient(I, dI, spec):
    Ix, Iy = filters.dx(I), filters.dy(I)
    S = Ix * Ix + Iy * Iy
    dS = None if dI is None else 2.0 * (Ix * filters.dx(dI) + Iy * filters.dy(dI))
    return _var_of(S, dS)


def _var_gradient(I, dI, spec):
    Ix, Iy = filters.dx(I), filters.dy(I)
    G = np.sqrt(Ix * Ix + Iy * Iy)
    if dI is None:
        return _var_of(G, None)
    inv = np.divide(1.0, G, out=np.zeros_like(G), where=G > 0)
    dG = (Ix * filters.dx(dI) + Iy * filters.dy(dI)) * inv
    return _var_of(G, dG)


_IMPL = {
    "variance": _variance,
    "mean-square": _mean_square,
    "mad": _mad,
    "mav": _mav,
    "entropy": _entropy,
    "area": _area,
    "range": _range,
    "local-variance": _local_variance,
    "local-ms": _local_ms,
    "local-mad": _local_mad,
    "local-mav": _local_mav,
    "moran": _moran,
    "geary": _geary,
    "gradient": _gradient,
    "laplacian": _laplacian,
    "hessian": _hessian,
    "dog": _dog,
    "log": _log,
    "var-laplacian": _var_laplacian,
    "var-gradient": _var_gradient,
    "var-sq-gradient": _var_sq_gradient,
}


def _spec(spec):
    return LossSpec.parse(spec) if isinstance(spec, str) else spec


def evaluate(spec, image, grads=None) -> LossEval:
    """Loss value of ``image`` and, if ``grads`` is given, its analytic gradient.

    ``image`` may be a :class:`TimestampImage` for the mean-timestamp loss.
    Raises ``NotImplementedError`` if a gradient is requested for a kind
    without an analytic derivative.
    """
    spec = _spec(spec)
    if spec.kind == "mean-timestamp":
        if grads is not None:
            raise NotImplementedError("mean-timestamp has no analytic gradient")
        return LossEval(mean_timestamp_loss(image))
    if grads is not None and not spec.analytic:
        raise NotImplementedError(f"{spec.name} has no analytic gradient")
    I = _as_image(image)
    if grads is not None:
        grads = np.asarray(grads, dtype=np.float64)
        if grads.ndim == I.ndim:
            grads = grads[None]
    val, g = _IMPL[spec.kind](I, grads, spec)
    if g is None:
        return LossEval(val)
    return LossEval(val, np.asarray(g, dtype=np.float64), "analytic")


def loss_gradient(spec, iwg: IweWithGradient) -> LossEval:
    """Value and analytic gradient from an IWE with its derivative images."""
    return evaluate(spec, iwg.image, iwg.grads)


# ---------------------------------------------------------------------------
# public value-only entry points

def variance(I):
    return _variance(_as_image(I), None, None)[0]


def mean_square(I):
    return _mean_square(_as_image(I), None, None)[0]


def mad(I):
    return _mad(_as_image(I), None, LossSpec("mad"))[0]


def mav(I):
    return _mav(_as_image(I), None, LossSpec("mav"))[0]


def entropy(I, bins=200, sigma_bins=5.0):
    """Differential entropy -sum p log p dz of the smoothed image PDF (nats)."""
    return _entropy(_as_image(I), None, LossSpec("entropy", bins=bins, sigma_bins=sigma_bins))[0]


def area(I, weight="exp", scale=1.0):
    """Weighted support sum(F(I / scale) - F(0)) of a non-negative image."""
    return _area(_as_image(I), None, LossSpec("area", weight=weight, area_scale=scale))[0]


def range_support(I, weight="exp", bins=200, sigma_bins=5.0):
    """Support of the image PDF, sum_j (F(p_j) - F(0)) dz."""
    return _range(_as_image(I), None, LossSpec("range", weight=weight, bins=bins, sigma_bins=sigma_bins))[0]


_LOCAL = {"variance": "local-variance", "ms": "local-ms", "mad": "local-mad", "mav": "local-mav"}


def local_stat(I, kind="variance", sigma=3.0):
    """Aggregated local statistic; ``kind`` in {variance, ms, mad, mav}."""
    k = _LOCAL.get(kind, kind)
    return evaluate(LossSpec(k, sigma=sigma), I).value


def local_stat_map(I, kind="variance", sigma=3.0):
    """Per-pixel local statistic (the integrand of :func:`local_stat`)."""
    I = _as_image(I)
    G = lambda a: filters.local_mean(a, sigma)  # noqa: E731
    kind = kind.replace("local-", "")
    if kind == "variance":
        m = G(I)
        return G(I * I) - m * m
    if kind == "ms":
        return G(I * I)
    if kind == "mad":
        return G(smooth_abs(I - G(I), LossSpec("local-mad").abs_delta)[0])
    if kind == "mav":
        return G(np.abs(I))
    raise ValueError(f"unknown local statistic {kind!r}")


def moran_i(I, sigma_m=1.0, radius=3):
    return _moran(_as_image(I), None, LossSpec("moran", sigma_m=sigma_m, moran_radius=radius))[0]


def geary_c(I, sigma_m=1.0, radius=3):
    return _geary(_as_image(I), None, LossSpec("geary", sigma_m=sigma_m, moran_radius=radius))[0]


def derivative_loss(I, kind, sigma1=1.0, sigma2=3.0):
    """Sharpness loss; ``kind`` in {gradient, laplacian, hessian, dog, log}.

    For ``log`` the second width is ``1.6 * sigma1`` regardless of ``sigma2``.
    """
    I = _as_image(I)
    if I.ndim != 2 or min(I.shape) < 3:
        raise ValueError("derivative losses need an image of at least 3x3 pixels")
    return evaluate(LossSpec(kind, sigma1=sigma1, sigma2=sigma2), I).value


def composite_loss(I, kind):
    """Variance of a derivative field; ``kind`` in {var-laplacian, var-gradient, var-sq-gradient}."""
    I = _as_image(I)
    if I.ndim != 2 or min(I.shape) < 3:
        raise ValueError("composite losses need an image of at least 3x3 pixels")
    return evaluate(LossSpec(kind), I).value


def mean_timestamp_loss(T: TimestampImage):
    """Variance of the per-pixel mean timestamp over occupied pixels."""
    occ = np.asarray(T.count) > 0
    if not np.any(occ):
        raise EmptySupportError("no occupied pixels in the timestamp image")
    return float(np.var(np.asarray(T.mean_t)[occ]))
