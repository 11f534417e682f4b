import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evfocus import CameraGeometry, DepthWarp, FlowWarp, IweOptions, Objective, OptimConfig, PoseTrack, maximize
from evfocus.optim import FunctionObjective, ObjectiveError, depth_samples, finite_diff_gradient, grid_eval_2d, sweep_depth
from evfocus.synth import flow_patch_scene, gen_events, plane_scene

PATCH = CameraGeometry.pinhole(48, 48, 30.0)


def _quadratic(target):
    target = np.asarray(target, dtype=float)
    return FunctionObjective(lambda th: -np.sum((th - target) ** 2), lambda th: -2 * (th - target))


def test_quadratic_converges():
    res = maximize(_quadratic([3.0, -2.0]), [0.0, 0.0])
    assert np.allclose(res.theta, [3.0, -2.0], atol=1e-6)
    assert res.iterations <= 10 and res.converged


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["PR+", "FR"]))
def test_trace_monotone(seed, variant):
    r = np.random.default_rng(seed)
    A = r.normal(size=(3, 3))
    A = A @ A.T + 0.1 * np.eye(3)
    b = r.normal(size=3)
    # a non-quadratic concave objective
    obj = FunctionObjective(lambda x: -x @ A @ x / 2 + b @ x - 0.1 * np.sum(x ** 4),
                            lambda x: -A @ x + b - 0.4 * x ** 3)
    x0 = r.normal(size=3)
    res = maximize(obj, x0, OptimConfig(variant=variant))
    vals = [v for _, v in res.trace]
    assert np.all(np.diff(vals) >= 0)
    assert res.value >= obj(x0)


def test_non_finite_objective_aborts():
    obj = FunctionObjective(lambda x: np.nan, lambda x: np.ones(2))
    with pytest.raises(ObjectiveError, match="theta"):
        maximize(obj, [0.5, 0.5])


def test_config_validation():
    with pytest.raises(ValueError):
        OptimConfig(c=1.5)
    with pytest.raises(ValueError):
        OptimConfig(variant="HS")
    with pytest.raises(ValueError):
        OptimConfig(gtol=0.0)


def test_finite_difference_examples():
    a = np.array([1.5, -2.0, 0.25])
    np.testing.assert_allclose(finite_diff_gradient(lambda x: a @ x, np.zeros(3)), a, atol=1e-10)
    # ||theta||_4^4 has gradient 4 theta^3
    g = finite_diff_gradient(lambda x: np.sum(x ** 4), np.array([1.0, 1.0]), 1e-4)
    np.testing.assert_allclose(g, [4.0, 4.0], atol=1e-6)
    g = finite_diff_gradient(lambda x: np.sum(x ** 2) ** 2, np.array([1.0, 1.0]), 1e-4)
    np.testing.assert_allclose(g, [8.0, 8.0], atol=1e-6)
    with pytest.raises(ValueError):
        finite_diff_gradient(lambda x: 0.0, np.zeros(1), 0.0)
    with pytest.raises(ObjectiveError):
        finite_diff_gradient(lambda x: np.inf, np.zeros(1))


def _patch_objective(loss="variance", seed=0):
    res = gen_events(flow_patch_scene(seed=seed), PATCH, seed)
    return Objective(res.window, FlowWarp(), loss, IweOptions(), shape=(48, 48))


def test_flow_recovery_with_cg():
    res = maximize(_patch_objective(), [0.0, 0.0], OptimConfig(initial_step=10.0))
    assert np.linalg.norm(res.theta - [-40.0, 0.0]) < 1.0


def test_grid_examples():
    g = grid_eval_2d(_quadratic([0.0, 0.0]), (0.0, 0.0), 2.0, 5)
    assert g.best_index == (2, 2)
    g = grid_eval_2d(FunctionObjective(lambda x: 1.0), (0.0, 0.0), 1.0, 4)
    assert g.best_index == (0, 0) and np.all(g.values == 1.0)
    with pytest.raises(ValueError):
        grid_eval_2d(_quadratic([0, 0]), (0, 0), 1.0, 1)


def test_grid_is_order_independent():
    g = grid_eval_2d(_quadratic([0.3, -0.7]), (0.0, 0.0), 2.0, 7)
    ref = [[-(x - 0.3) ** 2 - (y + 0.7) ** 2 for x in g.vx] for y in g.vy]
    np.testing.assert_array_equal(g.values, ref)


def test_refined_grid_argmax_inside_coarse_cell():
    obj = _patch_objective()
    coarse = grid_eval_2d(obj, (0.0, 0.0), 60.0, 11)
    fine = grid_eval_2d(obj, (0.0, 0.0), 60.0, 21)
    step = coarse.vx[1] - coarse.vx[0]
    assert np.all(np.abs(fine.best - coarse.best) <= step / 2 + 1e-9)


def test_minimized_loss_is_negated():
    obj = _patch_objective("area-exp")
    theta = np.array([-10.0, 3.0])
    assert obj(theta) == -obj.loss_eval(theta).value
    v, g = obj.value_and_grad(theta)
    np.testing.assert_array_equal(g, -obj.loss_eval(theta, True).gradient)


def test_depth_samples():
    z = depth_samples(0.5, 3.0, 11)
    assert z[0] == pytest.approx(0.5) and z[-1] == pytest.approx(3.0)
    assert np.allclose(np.diff(1 / z), np.diff(1 / z)[0])
    with pytest.raises(ValueError):
        depth_samples(2.0, 1.0, 5)


def test_depth_curve_constant_without_baseline():
    geom = CameraGeometry.pinhole(64, 48, 50.0)
    res = gen_events(plane_scene(geom, n_events=3000, n_points=30, n_segments=5), geom, 0)
    t = res.poses.t
    still = PoseTrack(t, res.poses.quat, np.zeros((len(t), 3)))
    curve = sweep_depth(Objective(res.window, DepthWarp(geom, still), "variance"), 0.5, 3.0, 12)
    assert np.ptp(curve.raw) <= 1e-12 * abs(curve.raw[0])


def test_depth_curves_locate_plane():
    geom = CameraGeometry.pinhole(96, 72, 80.0)
    res = gen_events(plane_scene(geom, n_events=8000, n_points=60, n_segments=15), geom, 1)
    z = depth_samples(0.5, 3.0, 40)
    nearest = int(np.argmin(np.abs(1 / z - 1 / 1.1)))
    best = {}
    for loss in ("variance", "area-exp"):
        curve = sweep_depth(Objective(res.window, DepthWarp(geom, res.poses), loss), 0.5, 3.0, 40)
        best[loss] = curve.best_index
        assert curve.normalized.min() == 0.0 and curve.normalized.max() == 1.0
    assert best["variance"] == nearest
    assert abs(best["variance"] - best["area-exp"]) <= 1
