import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evfocus import CameraGeometry, DepthWarp, EventWindow, FlowWarp, PoseTrack, RotationWarp
from evfocus.camera import PoseSample
from evfocus.events import Event
from evfocus.optim import finite_diff_gradient
from evfocus.warps import warp_depth, warp_flow, warp_rotation

GEOM = CameraGeometry(64, 64, 60.0, 62.0, 31.5, 30.0)


def _window(seed, n=50, duration=0.05):
    r = np.random.default_rng(seed)
    t = np.sort(r.uniform(0, duration, n))
    return EventWindow.from_arrays(t, r.uniform(0, 63, n), r.uniform(0, 63, n), r.choice([-1.0, 1.0], n))


def _translation_track(duration=0.05, seed=0):
    r = np.random.default_rng(seed)
    t = np.linspace(0, duration, 11)
    vel = r.normal(scale=2.0, size=3)
    return PoseTrack(t, np.tile([0, 0, 0, 1.0], (11, 1)), t[:, None] * vel[None, :])


def test_rotation_identity_at_zero():
    w = _window(0)
    out = RotationWarp(GEOM)(w, np.zeros(3))
    np.testing.assert_allclose(out.x, w.x, atol=1e-12)
    np.testing.assert_allclose(out.y, w.y, atol=1e-12)


@pytest.mark.parametrize("wz", [-5.0, 0.3, 20.0])
def test_rotation_about_axis_fixes_principal_point(wz):
    e = Event(0.02, GEOM.cx, GEOM.cy, 1)
    out = warp_rotation(e, 0.0, (0.0, 0.0, wz), GEOM)
    assert out.in_bounds
    assert abs(out.x - GEOM.cx) < 1e-12 and abs(out.y - GEOM.cy) < 1e-12


def test_rotation_behind_camera_is_out_of_bounds():
    e = Event(1.0, 10.0, 20.0, 1)
    out = warp_rotation(e, 0.0, (0.0, np.pi, 0.0), GEOM)
    assert not out.in_bounds


def test_flow_examples():
    e = Event(0.5, 10.0, 10.0, 1)
    out = warp_flow(e, 0.0, (-40.0, 0.0))
    assert (out.x, out.y) == (30.0, 10.0)
    np.testing.assert_array_equal(out.jacobian, [[-0.5, 0.0], [0.0, -0.5]])
    out = warp_flow(e, 0.0, (0.0, 0.0))
    assert (out.x, out.y) == (10.0, 10.0)


def test_depth_identical_poses_is_identity():
    pose = PoseSample(0.0, (0.0, 0.0, 0.0, 1.0), (0.1, -0.2, 0.3))
    for Z in (0.3, 1.1, 50.0):
        out = warp_depth(Event(0.0, 17.0, 40.0, 1), pose, pose, Z, GEOM)
        assert abs(out.x - 17.0) < 1e-9 and abs(out.y - 40.0) < 1e-9


def test_depth_forward_projection_collapses():
    r = np.random.default_rng(3)
    X = np.array([0.05, -0.02, 1.1])
    ref = PoseSample(0.0, (0, 0, 0, 1.0), (0.0, 0.0, 0.0))
    target = (GEOM.fx * X[0] / X[2] + GEOM.cx, GEOM.fy * X[1] / X[2] + GEOM.cy)
    for k in range(5):
        c = np.array([*r.uniform(-0.15, 0.15, 2), 0.0])
        Xc = X - c
        e = Event(0.0, GEOM.fx * Xc[0] / Xc[2] + GEOM.cx, GEOM.fy * Xc[1] / Xc[2] + GEOM.cy, 1)
        out = warp_depth(e, PoseSample(0.0, (0, 0, 0, 1.0), tuple(c)), ref, 1.1, GEOM)
        assert np.hypot(out.x - target[0], out.y - target[1]) < 1e-6


def test_depth_far_plane_removes_translation_parallax():
    ref = PoseSample(0.0, (0, 0, 0, 1.0), (0.0, 0.0, 0.0))
    pose = PoseSample(0.0, (0, 0, 0, 1.0), (0.3, -0.1, 0.05))
    out = warp_depth(Event(0.0, 20.0, 33.0, 1), pose, ref, 1e6, GEOM)
    assert np.hypot(out.x - 20.0, out.y - 33.0) < 0.01


def test_depth_behind_reference_is_invalid():
    ref = PoseSample(0.0, (0, 0, 0, 1.0), (0.0, 0.0, 2.0))
    pose = PoseSample(0.0, (0, 0, 0, 1.0), (0.0, 0.0, 0.0))
    assert not warp_depth(Event(0.0, 20.0, 33.0, 1), pose, ref, 1.0, GEOM).in_bounds


def _warps(seed):
    r = np.random.default_rng(seed)
    return [
        (RotationWarp(GEOM), r.normal(scale=3.0, size=3)),
        (FlowWarp(), r.normal(scale=50.0, size=2)),
        (DepthWarp(GEOM, _translation_track(seed=seed)), np.array([r.uniform(0.5, 3.0)])),
    ]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_jacobians_match_finite_differences(seed):
    w = _window(seed, n=20)
    for warp, theta in _warps(seed):
        out = warp(w, theta, with_jacobian=True)
        for j in range(warp.dim):
            for comp in ("x", "y"):
                f = lambda th: getattr(warp(w, th), comp)  # noqa: E731
                e = np.zeros(warp.dim)
                e[j] = 1e-4
                fd = (f(theta + e) - f(theta - e)) / 2e-4
                an = out.jac[:, 0 if comp == "x" else 1, j]
                scale = np.maximum(np.abs(fd), 1.0)
                assert np.all(np.abs(an - fd) / scale < 1e-4)


def test_rotation_single_event_jacobian_fd():
    r = np.random.default_rng(7)
    for _ in range(20):
        omega, dt = r.normal(scale=3, size=3), r.uniform(-0.05, 0.05)
        e = Event(dt, r.uniform(5, 58), r.uniform(5, 58), 1)
        an = warp_rotation(e, 0.0, omega, GEOM, with_jacobian=True).jacobian
        for i, comp in enumerate(("x", "y")):
            fd = finite_diff_gradient(lambda th: getattr(warp_rotation(e, 0.0, th, GEOM), comp), omega, 1e-5)
            np.testing.assert_allclose(an[i], fd, rtol=1e-5, atol=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_reference_time_events_fixed(seed):
    w = _window(seed, n=10)
    w = EventWindow.from_arrays(np.full(10, w.t_ref), w.x, w.y, w.p, t_ref=w.t_ref)
    for warp, theta in _warps(seed):
        out = warp(w, theta)
        np.testing.assert_allclose(out.x, w.x, atol=1e-9)
        np.testing.assert_allclose(out.y, w.y, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_flow_affine_in_v(seed):
    r = np.random.default_rng(seed)
    w = _window(seed, n=10)
    v1, v2, a = r.normal(size=2), r.normal(size=2), r.normal()
    fw = FlowWarp()
    x = lambda v: fw(w, v).x  # noqa: E731
    np.testing.assert_allclose(x(a * v1 + (1 - a) * v2), a * x(v1) + (1 - a) * x(v2), atol=1e-9)
    np.testing.assert_array_equal(fw(w, v1, True).jac, fw(w, v2, True).jac)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rotation_time_reversal(seed):
    r = np.random.default_rng(seed)
    omega, d = r.normal(scale=3, size=3), r.uniform(0, 0.05)
    x, y = r.uniform(5, 58, 2)
    a = warp_rotation(Event(1.0 + d, x, y, 1), 1.0, omega, GEOM)
    b = warp_rotation(Event(1.0 - d, x, y, 1), 1.0, -omega, GEOM)
    assert abs(a.x - b.x) < 1e-9 and abs(a.y - b.y) < 1e-9
