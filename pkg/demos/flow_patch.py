"""Optical flow of a small patch by focus maximization.

A 48 x 48 patch of points and short edges translates at (-40, 0) px/s.
The flow is recovered by conjugate-gradient ascent from zero and then
compared with the extremum of a coarse loss surface for a few losses.
"""

import numpy as np

from evfocus import CameraGeometry, FlowWarp, IweOptions, Objective, OptimConfig, maximize
from evfocus.optim import grid_eval_2d
from evfocus.synth import flow_patch_scene, gen_events

geom = CameraGeometry.pinhole(48, 48, 100.0)
res = gen_events(flow_patch_scene(v=(-40.0, 0.0)), geom, seed=0)
win = res.window
print(f"{len(win.events.t)} events, true flow {res.theta}")

# gradient ascent on the variance of the IWE
obj = Objective(win, FlowWarp(), "variance", shape=(48, 48))
out = maximize(obj, np.zeros(2), OptimConfig(initial_step=10.0))
print(f"variance: flow {np.round(out.theta, 2)} after {out.iterations} iterations")

# loss surfaces, 3 px/s cells
for name in ["variance", "gradient", "area-exp", "entropy"]:
    obj = Objective(win, FlowWarp(), name, IweOptions(), shape=(48, 48))
    g = grid_eval_2d(obj, (0.0, 0.0), 60.0, 41)
    print(f"{name:10s} surface extremum at {g.best}")
