"""Objective wrapper, nonlinear conjugate gradient, and exhaustive scans."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .iwe import IweOptions, accumulate_iwe, accumulate_iwe_with_gradient, timestamp_image
from .losses import LossEval, LossSpec, evaluate

logger = logging.getLogger(__name__)

__all__ = [
    "Objective",
    "FunctionObjective",
    "ObjectiveError",
    "OptimConfig",
    "OptimResult",
    "maximize",
    "finite_diff_gradient",
    "GridResult",
    "grid_eval_2d",
    "FocalCurve",
    "sweep_depth",
    "default_step",
]


class ObjectiveError(FloatingPointError):
    pass


def _check(value, theta):
    if not np.all(np.isfinite(value)):
        raise ObjectiveError(f"objective is not finite at theta={np.asarray(theta).tolist()}")


def finite_diff_gradient(f, theta, h=1e-4):
    """Central differences of scalar ``f`` at ``theta`` (2M evaluations)."""
    if not h > 0:
        raise ValueError("h must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    g = np.empty_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e.flat[j] = h
        fp, fm = f(theta + e), f(theta - e)
        _check([fp, fm], theta)
        g.flat[j] = (fp - fm) / (2 * h)
    return g


class Objective:
    """Focus loss of a window as a function of the warp parameters.

    ``__call__`` returns the loss multiplied by its sense (+1 maximize, -1
    minimize), so larger is always better.  With polarity on, area losses are
    evaluated on the positive- and negative-event images separately and added.
    """

    def __init__(self, window, warp, loss, options: IweOptions = IweOptions(), shape=None,
                 gradient="analytic", h=1e-4):
        self.window = window
        self.warp = warp
        self.loss = LossSpec.parse(loss) if isinstance(loss, str) else loss
        self.options = options
        self.shape = shape
        if gradient not in ("analytic", "finite-difference"):
            raise ValueError("gradient must be 'analytic' or 'finite-difference'")
        self.gradient = gradient
        self.h = h
        self.n_evals = 0
        self.n_grads = 0
        self._parts = self._split()

    @property
    def sign(self):
        return self.loss.sign

    @property
    def dim(self):
        return self.warp.dim

    def _split(self):
        if self.loss.kind == "area" and self.options.use_polarity:
            opts = IweOptions(False, self.options.splat, self.options.eps, self.options.radius)
            w = self.window
            return [(w.subset(w.p > 0), opts), (w.subset(w.p < 0), opts)]
        return [(self.window, self.options)]

    def loss_eval(self, theta, with_gradient=False) -> LossEval:
        """Raw loss value (not sign-adjusted) and optional gradient."""
        theta = np.asarray(theta, dtype=np.float64)
        self.n_evals += 1
        if self.loss.kind == "mean-timestamp":
            T = timestamp_image(self.window, self.warp, theta, shape=self.shape)
            value = evaluate(self.loss, T).value
            grad = None
            if with_gradient:
                grad = finite_diff_gradient(lambda th: self.loss_eval(th).value, theta, self.h)
                return LossEval(value, grad, "finite-difference")
            return LossEval(value)

        analytic = with_gradient and self.loss.analytic and self.gradient == "analytic"
        value = 0.0
        grad = np.zeros(theta.size) if analytic else None
        for window, opts in self._parts:
            if len(window) == 0:
                continue
            if analytic:
                iwg = accumulate_iwe_with_gradient(window, self.warp, theta, opts, shape=self.shape)
                ev = evaluate(self.loss, iwg.image, iwg.grads)
                grad += ev.gradient
            else:
                img = accumulate_iwe(window, self.warp, theta, opts, shape=self.shape)
                ev = evaluate(self.loss, img)
            value += ev.value
        _check(value, theta)
        if analytic:
            self.n_grads += 1
            return LossEval(value, grad, "analytic")
        if with_gradient:
            self.n_grads += 1
            grad = finite_diff_gradient(lambda th: self.loss_eval(th).value, theta, self.h)
            return LossEval(value, grad, "finite-difference")
        return LossEval(value)

    def __call__(self, theta):
        return self.sign * self.loss_eval(theta).value

    def value_and_grad(self, theta):
        ev = self.loss_eval(theta, with_gradient=True)
        return self.sign * ev.value, self.sign * ev.gradient


class FunctionObjective:
    """Adapter for a plain function f(theta) (maximized) with optional gradient."""

    sign = 1.0

    def __init__(self, f, grad=None, h=1e-6):
        self.f = f
        self.grad = grad
        self.h = h

    def __call__(self, theta):
        return float(self.f(np.asarray(theta, dtype=np.float64)))

    def value_and_grad(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        g = self.grad(theta) if self.grad is not None else finite_diff_gradient(self, theta, self.h)
        return self(theta), np.asarray(g, dtype=np.float64)


def default_step(kind):
    """Initial line-search step length in parameter units."""
    return {"rotation": 0.5, "flow": 10.0, "depth": 0.1}.get(kind, 1.0)


@dataclass(frozen=True)
class OptimConfig:
    variant: str = "PR+"  # or "FR"
    max_iter: int = 100
    gtol: float = 1e-12
    xtol: float = 1e-7
    ftol: float = 1e-9  # relative improvement per iteration
    c: float = 1e-4
    shrink: float = 0.5
    initial_step: float = 1.0
    max_backtrack: int = 40

    def __post_init__(self):
        if self.variant not in ("PR+", "FR"):
            raise ValueError("variant must be 'PR+' or 'FR'")
        if not (0 < self.c < 1) or not (0 < self.shrink < 1):
            raise ValueError("c and shrink must lie in (0, 1)")
        if not (self.gtol > 0 and self.xtol > 0 and self.ftol > 0 and self.initial_step > 0):
            raise ValueError("tolerances and initial step must be positive")


@dataclass
class OptimResult:
    theta: np.ndarray
    value: float
    iterations: int
    n_grad: int
    converged: bool
    trace: list = field(default_factory=list)
    message: str = ""


def _quadratic_step(f0, slope, alpha, fa):
    """Maximizer of the parabola through f0, slope at 0 and fa at alpha (None if convex)."""
    q = (fa - f0 - slope * alpha) / (alpha * alpha)
    if q >= 0:
        return None
    return -slope / (2 * q)


def _line_search(objective, x, f, d, gd, alpha, cfg):
    """Backtracking Armijo search refined by one safeguarded quadratic step.

    Returns ``(alpha, value)`` or ``None`` when no sufficient increase is found.
    """
    fa = objective(x + alpha * d)
    _check(fa, x + alpha * d)
    n = 0
    while not fa >= f + cfg.c * alpha * gd:
        n += 1
        if n > cfg.max_backtrack:
            return None
        a_q = _quadratic_step(f, gd, alpha, fa)
        lo, hi = 0.1 * alpha, cfg.shrink * alpha
        alpha = hi if a_q is None else min(max(a_q, lo), hi)
        fa = objective(x + alpha * d)
        _check(fa, x + alpha * d)
    if n == 0:
        # accepted at once: try the interpolated or an extrapolated step
        a_q = _quadratic_step(f, gd, alpha, fa)
        a_q = 4 * alpha if a_q is None else min(a_q, 4 * alpha)
        if abs(a_q - alpha) > 0.05 * alpha and a_q > 0.1 * alpha:
            fq = objective(x + a_q * d)
            if np.isfinite(fq) and fq > fa and fq >= f + cfg.c * a_q * gd:
                alpha, fa = a_q, fq
    return alpha, fa


def maximize(objective, theta_init, config: Optional[OptimConfig] = None) -> OptimResult:
    """Nonlinear conjugate gradient ascent with a backtracking Armijo search.

    Directions are restarted with the gradient every M iterations (M = number
    of parameters), when beta would be negative (PR+), or when the direction
    is not an ascent direction.  The accepted values are non-decreasing.
    """
    cfg = config or OptimConfig()
    x = np.array(theta_init, dtype=np.float64).reshape(-1)
    M = x.size
    f, g = objective.value_and_grad(x)
    _check([f, *g], x)
    n_grad = 1
    trace = [(x.copy(), float(f))]
    d = g.copy()
    step_len = cfg.initial_step
    converged = False
    message = "max iterations"
    it = 0
    since_restart = 0
    for it in range(1, cfg.max_iter + 1):
        if np.linalg.norm(g) < cfg.gtol:
            converged, message = True, "gradient norm below tolerance"
            it -= 1
            break
        gd = float(g @ d)
        if gd <= 0:
            d = g.copy()
            gd = float(g @ g)
            since_restart = 0
        found = _line_search(objective, x, f, d, gd, step_len / np.linalg.norm(d), cfg)
        if found is None:
            if since_restart > 0:
                d = g.copy()
                since_restart = 0
                continue
            converged, message = True, "line search cannot improve"
            break
        alpha, _ = found
        xn = x + alpha * d
        fn, gn = objective.value_and_grad(xn)
        _check([fn, *gn], xn)
        n_grad += 1
        dx = np.linalg.norm(xn - x)
        step_len = max(dx, 1e-3 * cfg.initial_step)
        since_restart += 1
        if cfg.variant == "FR":
            beta = float(gn @ gn) / float(g @ g)
        else:
            beta = max(0.0, float(gn @ (gn - g)) / float(g @ g))
        if since_restart >= M:
            beta = 0.0
            since_restart = 0
        d = gn + beta * d
        gain = fn - f
        x, f, g = xn, fn, gn
        trace.append((x.copy(), float(f)))
        if dx < cfg.xtol:
            converged, message = True, "step below tolerance"
            break
        if gain <= cfg.ftol * max(abs(f), 1e-300):
            converged, message = True, "relative improvement below tolerance"
            break
    return OptimResult(x, float(f), it, n_grad, converged, trace, message)


@dataclass
class GridResult:
    vx: np.ndarray
    vy: np.ndarray
    values: np.ndarray  # objective (maximization sense), shape (len(vy), len(vx))
    raw: np.ndarray     # loss values as defined by the loss
    best_index: tuple   # (row, col) of the best cell
    best: np.ndarray    # (vx, vy) at the best cell


def grid_eval_2d(objective, center, half_span, steps) -> GridResult:
    """Evaluate on a uniform steps x steps grid; row index follows vy."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    center = np.asarray(center, dtype=np.float64).reshape(2)
    hs = np.broadcast_to(np.asarray(half_span, dtype=np.float64), (2,))
    vx = np.linspace(center[0] - hs[0], center[0] + hs[0], steps)
    vy = np.linspace(center[1] - hs[1], center[1] + hs[1], steps)
    values = np.empty((steps, steps))
    for i, y in enumerate(vy):
        for j, x in enumerate(vx):
            values[i, j] = objective(np.array([x, y]))
    k = int(np.argmax(values))  # first maximum in row-major order
    r, c = divmod(k, steps)
    sign = getattr(objective, "sign", 1.0)
    return GridResult(vx, vy, values, values * sign, (r, c), np.array([vx[c], vy[r]]))


@dataclass
class FocalCurve:
    depths: np.ndarray
    values: np.ndarray      # objective (maximization sense)
    raw: np.ndarray         # loss values
    best_index: int
    normalized: np.ndarray  # raw values min-max scaled to [0, 1]

    @property
    def best_depth(self):
        return float(self.depths[self.best_index])


def depth_samples(z_min, z_max, steps, spacing="inverse"):
    if not 0 < z_min < z_max:
        raise ValueError("need 0 < z_min < z_max")
    if spacing == "inverse":
        return 1.0 / np.linspace(1.0 / z_max, 1.0 / z_min, steps)[::-1]
    if spacing == "linear":
        return np.linspace(z_min, z_max, steps)
    raise ValueError(f"unknown spacing {spacing!r}")


def normalize01(v):
    v = np.asarray(v, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def sweep_depth(objective, z_min, z_max, steps, spacing="inverse") -> FocalCurve:
    """Loss along a set of depth hypotheses; the best sample follows the loss sense."""
    depths = depth_samples(z_min, z_max, steps, spacing)
    values = np.array([objective(np.array([z])) for z in depths])
    sign = getattr(objective, "sign", 1.0)
    raw = values * sign
    return FocalCurve(depths, values, raw, int(np.argmax(values)), normalize01(raw))
