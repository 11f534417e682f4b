"""Depth of a fronto-parallel plane by plane sweep.

The camera moves 0.3 m sideways in front of a textured plane 1.1 m away.
Warping the events onto candidate depths and scoring each slice gives a
focal curve; per pixel, the best slice gives a semi-dense depth map.
"""

import numpy as np

from evfocus import CameraGeometry
from evfocus.pipelines import run_depth
from evfocus.synth import gen_events, plane_scene

geom = CameraGeometry.pinhole(240, 180, 200.0)
res = gen_events(plane_scene(geom, depth=1.1, baseline=0.3), geom, seed=0)
out = run_depth(res.window, geom, res.poses, losses=("variance", "area-exp"), steps=50)

for name, curve in out.curves.items():
    print(f"{name:9s} focal curve extremum at {curve.best_depth:.3f} m")

d = out.depth[out.valid]
print(f"{out.valid.sum()} valid pixels, median depth {np.median(d):.3f} m, "
      f"{100 * np.mean(np.abs(d - 1.1) < 0.05):.1f}% within 5 cm")
