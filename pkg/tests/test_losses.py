import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from evfocus import EventWindow, FlowWarp, IweOptions, LossSpec, accumulate_iwe, accumulate_iwe_with_gradient
from evfocus import filters
from evfocus.iwe import TimestampImage
from evfocus.losses import (LOSS_NAMES, DegenerateDistributionError, EmptySupportError, area, composite_loss,
                            derivative_loss, entropy, evaluate, geary_c, local_stat, local_stat_map, loss_gradient,
                            mad, mav, mean_square, mean_timestamp_loss, moran_i, range_support, smooth_abs,
                            smoothed_pdf, variance)
from evfocus.optim import finite_diff_gradient

GLOBAL = ["variance", "mean-square", "mad", "mav", "entropy", "range-exp", "range-gaussian", "range-lorentzian",
          "range-hyperbolic"]
SPATIAL = [n for n in LOSS_NAMES if LossSpec.parse(n).spatial]
IMAGE_LOSSES = [n for n in LOSS_NAMES if n != "mean-timestamp"]
ANALYTIC = [n for n in LOSS_NAMES if LossSpec.parse(n).analytic]

images = arrays(np.float64, (12, 12), elements=st.floats(-5, 5, allow_nan=False))


def test_goal_column():
    mins = {n for n in LOSS_NAMES if LossSpec.parse(n).goal == "min"}
    assert mins == {"area-exp", "area-gaussian", "area-lorentzian", "area-hyperbolic", "moran", "mean-timestamp"}
    assert len(LOSS_NAMES) == 28  # 22 kinds, area and range with four weights each


@given(st.floats(-1.0, 1.0, allow_nan=False), st.floats(1e-3, 0.1))
def test_smooth_abs(x, delta):
    a, d = smooth_abs(np.array([x]), delta)
    if abs(x) >= delta:
        assert a[0] == abs(x) and d[0] == np.sign(x)
    # monotone in |x|; inside, the slope peaks at 7 / (3 sqrt 3) for s = 1 / sqrt 3
    assert 0.0 <= a[0] <= abs(x) + 1e-15
    assert 0.0 <= d[0] * np.sign(x) <= 7 / (3 * math.sqrt(3)) + 1e-12
    h = 1e-7 * delta
    ap, _ = smooth_abs(np.array([x + h]), delta)
    am, _ = smooth_abs(np.array([x - h]), delta)
    assert (ap[0] - am[0]) / (2 * h) == pytest.approx(d[0], abs=1e-6)


def test_smooth_abs_edges():
    delta = 0.02
    a, d = smooth_abs(np.array([0.0, delta, -delta]), delta)
    assert a[0] == 0.0 and d[0] == 0.0
    assert np.allclose(a[1:], delta) and np.allclose(d[1:], [1.0, -1.0])
    # second derivative vanishes from the inside at the seam
    e = 1e-6 * delta
    _, d1 = smooth_abs(np.array([delta - e, delta - 2 * e]), delta)
    assert abs((d1[0] - d1[1]) / e) < 1e-3 / delta
    exact, _ = smooth_abs(np.array([-0.3, 0.01]), 0.0)
    assert exact.tolist() == [0.3, 0.01]
    with pytest.raises(ValueError):
        LossSpec("mad", abs_delta=-1.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        LossSpec.parse("sharpness")
    with pytest.raises(ValueError):
        LossSpec("entropy", bins=1)
    with pytest.raises(ValueError):
        LossSpec("local-variance", sigma=0.0)


def test_global_statistics_by_hand():
    I = np.array([[0.0, 0.0], [2.0, 2.0]])
    assert variance(I) == 1.0 and mean_square(I) == 2.0 and mad(I) == 1.0 and mav(I) == 1.0
    Z = np.zeros((3, 3))
    assert variance(Z) == mean_square(Z) == mad(Z) == mav(Z) == 0.0
    assert variance(np.full((4, 4), 3.0)) == 0.0


@settings(max_examples=100, deadline=None)
@given(images)
def test_variance_identity(I):
    mu = I.mean()
    ms = mean_square(I)
    assert abs(variance(I) - (ms - mu * mu)) <= 1e-10 * max(ms, 1e-300) + 1e-300


def test_mav_equals_mass_without_polarity():
    r = np.random.default_rng(0)
    n = 500
    w = EventWindow.from_arrays(np.sort(r.uniform(0, 0.1, n)), r.uniform(8, 39, n), r.uniform(8, 39, n), np.ones(n))
    img = accumulate_iwe(w, FlowWarp(), (0.0, 0.0), IweOptions(), shape=(48, 48))
    assert abs(mav(img) - n / img.size) < 1e-12


def test_entropy_two_spikes():
    I = np.zeros((8, 8))
    I[:, 4:] = 1.0
    # two bins of width 1: -sum p log p dz = log 2
    assert abs(entropy(I, bins=2, sigma_bins=1e-3) - math.log(2)) < 1e-9
    # finer bins shift the differential entropy by log(dz)
    dz = 1.0 / 199
    assert abs(entropy(I, bins=200, sigma_bins=1e-3) - (math.log(2) + math.log(dz))) < 1e-9


@settings(max_examples=30, deadline=None)
@given(images)
def test_entropy_reflection(I):
    if np.ptp(I) < 1e-6:
        return
    assert abs(entropy(I) - entropy(-I)) < 1e-9


def test_degenerate_pdf_errors():
    for f in (entropy, range_support, moran_i, geary_c):
        with pytest.raises(DegenerateDistributionError):
            f(np.full((5, 5), 2.0))


@settings(max_examples=30, deadline=None)
@given(images)
def test_smoothed_pdf_unit_area(I):
    if np.ptp(I) < 1e-6:
        return
    pdf = smoothed_pdf(I)
    assert np.all(pdf.p >= 0)
    assert abs(pdf.p.sum() * pdf.dz - 1.0) < 1e-6


def test_range_narrow_vs_uniform():
    # same value range; one puts the mass in one bin, the other spreads it over all bins
    narrow = np.zeros(400)
    narrow[0] = 1.0
    uniform = np.linspace(0, 1, 400)
    for w in ("exp", "gaussian", "lorentzian", "hyperbolic"):
        assert range_support(uniform, w, sigma_bins=1.0) > range_support(narrow, w, sigma_bins=1.0)


def test_area_examples():
    assert area(np.zeros((4, 4))) == 0.0
    I = np.zeros((4, 4))
    I[1, 2] = 1.0
    assert abs(area(I) - (1 - math.exp(-1))) < 1e-12
    assert abs(area(I) - 0.632121) < 1e-6
    with pytest.raises(ValueError):
        area(-I)


@pytest.mark.parametrize("kind", ["variance", "ms", "mad", "mav"])
def test_local_stats_constant_image(kind):
    I = np.full((20, 20), 2.5)
    m = local_stat_map(I, kind, 2.0)
    if kind in ("variance", "mad"):
        assert np.all(np.abs(m) < 1e-12)
    else:
        np.testing.assert_allclose(m, 2.5 if kind == "mav" else 6.25, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(images)
def test_local_variance_non_negative(I):
    assert np.all(local_stat_map(I, "variance", 1.5) >= -1e-9)


def _brute_local_variance(I, sigma, radius):
    x = np.arange(-radius, radius + 1)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    w = np.outer(g, g)
    H, W = I.shape
    out = np.full(I.shape, np.nan)
    for i in range(radius, H - radius):
        for j in range(radius, W - radius):
            P = I[i - radius:i + radius + 1, j - radius:j + radius + 1]
            m = np.sum(w * P)
            out[i, j] = np.sum(w * (P - m) ** 2)
    return out


def test_local_variance_brute_force():
    I = np.random.default_rng(1).normal(size=(32, 32))
    sigma = 2.0
    radius = len(filters.gaussian_kernel_1d(sigma)) // 2
    ref = _brute_local_variance(I, sigma, radius)
    got = local_stat_map(I, "variance", sigma)
    inner = ~np.isnan(ref)
    assert inner.sum() > 0
    np.testing.assert_allclose(got[inner], ref[inner], atol=1e-8)
    assert abs(local_stat(I, "variance", sigma) - got.sum()) < 1e-9


def _weight(sigma, radius):
    x = np.arange(-radius, radius + 1)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    G = np.outer(g, g) / np.outer(g, g).sum()
    c = G[radius, radius]
    G[radius, radius] = 0.0
    return G / (1 - c)


def _brute_moran_geary(I, sigma=1.0, radius=3):
    """Explicit double sums over all pixel pairs within the kernel support."""
    H, W = I.shape
    N = I.size
    w = _weight(sigma, radius)
    pos = [(i, j) for i in range(H) for j in range(W)]
    x = I.ravel()
    xc = x - x.mean()
    num_i = num_c = wsum = 0.0
    for a, (i, j) in enumerate(pos):
        for b, (k, l) in enumerate(pos):
            di, dj = k - i, l - j
            if abs(di) > radius or abs(dj) > radius:
                continue
            wij = w[di + radius, dj + radius]
            wsum += wij
            num_i += wij * xc[a] * xc[b]
            num_c += wij * (x[a] - x[b]) ** 2
    s2 = np.sum(xc * xc)
    moran = N / wsum * num_i / s2
    geary = (N - 1) * num_c / (2 * wsum * s2)
    return moran, geary


def test_moran_geary_brute_force():
    I = np.random.default_rng(2).normal(size=(16, 16))
    m, g = _brute_moran_geary(I)
    assert abs(moran_i(I) - m) < 1e-8
    assert abs(geary_c(I) - g) < 1e-8


def test_moran_geary_directions():
    blocks = np.zeros((16, 16))
    blocks[:, 8:] = 1.0
    m, _ = _brute_moran_geary(blocks)
    assert m > 0 and moran_i(blocks) > 0
    checker = (np.indices((16, 16)).sum(axis=0) % 2).astype(float)
    m, g = _brute_moran_geary(checker)
    assert m < 0 and g > 1
    assert moran_i(checker) < 0 and geary_c(checker) > 1


@pytest.mark.parametrize("kind", ["gradient", "laplacian", "hessian", "dog", "log"])
def test_derivative_losses_constant(kind):
    assert derivative_loss(np.full((9, 9), 4.0), kind) == 0.0


def test_ramp():
    I = np.tile(np.arange(10.0), (10, 1))
    g2 = filters.dx(I) ** 2 + filters.dy(I) ** 2
    inner = (slice(1, -1), slice(1, -1))
    assert g2[inner].sum() == g2[inner].size
    assert np.all(filters.laplacian(I)[inner] == 0.0)
    G = np.sqrt(g2)
    assert np.var(G[inner]) == 0.0


@settings(max_examples=50, deadline=None)
@given(images)
def test_hessian_bounds_laplacian(I):
    assert derivative_loss(I, "hessian") >= derivative_loss(I, "laplacian") / 2 - 1e-9


@pytest.mark.parametrize("kind", ["var-laplacian", "var-gradient", "var-sq-gradient"])
def test_composite_constant(kind):
    assert composite_loss(np.full((7, 7), 1.5), kind) == 0.0


def test_composite_sq_gradient_oracle():
    I = np.random.default_rng(3).normal(size=(32, 32))
    S = filters.dx(I) ** 2 + filters.dy(I) ** 2
    assert abs(composite_loss(I, "var-sq-gradient") - variance(S)) < 1e-10


def test_mean_timestamp_examples():
    T = TimestampImage(np.zeros((4, 4)), np.zeros((4, 4)))
    with pytest.raises(EmptySupportError):
        mean_timestamp_loss(T)
    mean_t = np.zeros((4, 4))
    count = np.zeros((4, 4))
    mean_t[1, 1], count[1, 1] = 0.1, 3
    assert mean_timestamp_loss(TimestampImage(mean_t, count)) == 0.0
    mean_t[2, 3], count[2, 3] = 0.3, 1
    assert abs(mean_timestamp_loss(TimestampImage(mean_t, count)) - 0.01) < 1e-15


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_permutation(seed):
    r = np.random.default_rng(seed)
    I = np.zeros((24, 24))
    I[8:16, 10] = 3.0
    I[5, 4:20] = 2.0
    I += 0.1 * r.random(I.shape)
    J = r.permutation(I.ravel()).reshape(I.shape)
    for name in GLOBAL:
        a, b = evaluate(name, I).value, evaluate(name, J).value
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))
    for name in SPATIAL:
        a, b = evaluate(name, I).value, evaluate(name, J).value
        assert abs(a - b) > 1e-6 * max(1.0, abs(a)), name


def _flow_window(seed, n=400, t_shift=0.0):
    r = np.random.default_rng(seed)
    # dyadic timestamps keep a constant time shift exact
    t = np.sort(r.integers(0, 400, n)) / 4096.0 + t_shift
    return EventWindow.from_arrays(t, r.uniform(6, 41, n), r.uniform(6, 41, n), r.choice([-1.0, 1.0], n),
                                   t_ref=200 / 4096.0 + t_shift)


@pytest.mark.parametrize("name", ANALYTIC)
@pytest.mark.parametrize("use_polarity", [False, True])
def test_analytic_gradient_fd(name, use_polarity):
    spec = LossSpec.parse(name)
    if spec.kind == "area" and use_polarity:
        pytest.skip("area is evaluated on single-polarity images")
    w = _flow_window(11)
    theta = np.array([-25.0, 15.0])
    opts = IweOptions(use_polarity)
    iwg = accumulate_iwe_with_gradient(w, FlowWarp(), theta, opts, shape=(48, 48))
    ev = loss_gradient(spec, iwg)
    assert ev.value == evaluate(spec, iwg.image).value
    f = lambda th: evaluate(spec, accumulate_iwe(w, FlowWarp(), th, opts, shape=(48, 48))).value  # noqa: E731
    fd = finite_diff_gradient(f, theta, 1e-4)
    err = np.abs(ev.gradient - fd)
    assert np.all(err <= 1e-4 * np.abs(fd) + 1e-6 * max(1.0, np.max(np.abs(fd)))), (ev.gradient, fd)


@pytest.mark.parametrize("name", ANALYTIC)
def test_zero_gradient_at_reference_time(name):
    w = _flow_window(5)
    w = EventWindow.from_arrays(np.full(len(w), w.t_ref), w.x, w.y, w.p, t_ref=w.t_ref)
    iwg = accumulate_iwe_with_gradient(w, FlowWarp(), (10.0, -3.0), IweOptions(), shape=(48, 48))
    assert np.all(loss_gradient(name, iwg).gradient == 0.0)


def test_variance_gradient_time_origin_invariant():
    g = []
    for shift in (0.0, 8.0):
        w = _flow_window(3, t_shift=shift)
        iwg = accumulate_iwe_with_gradient(w, FlowWarp(), (-30.0, 5.0), IweOptions(), shape=(48, 48))
        g.append(loss_gradient("variance", iwg).gradient)
    np.testing.assert_array_equal(g[0], g[1])


def test_no_analytic_gradient_kinds():
    iwg = accumulate_iwe_with_gradient(_flow_window(1), FlowWarp(), (0.0, 0.0), IweOptions(), shape=(48, 48))
    for name in ("moran", "geary"):
        with pytest.raises(NotImplementedError):
            loss_gradient(name, iwg)
