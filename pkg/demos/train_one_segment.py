"""
MAP training of a single segment
================================

The height GP and the latent length-scale GP are trained jointly by scaled
conjugate gradients on the negative log posterior. Accepted steps never
raise the objective.
"""

import numpy as np

from gpground.grid import GridConfig, build_grid
from gpground.lines import LineParams
from gpground.opt import ScgOptions
from gpground.pipeline import train_segment
from gpground.synth import suite_spec, generate

cloud, _ = generate(suite_spec("bumpy", seed=4))
seg = build_grid(cloud, GridConfig()).segments[7]
model, theta, trace, diag = train_segment(seg, GridConfig(), LineParams(), ScgOptions())

print(f"{diag['candidates']} candidates, {diag['lines']} lines, {diag['support']} support points")
print(f"objective {trace[0]:.2f} -> {trace[-1]:.2f} in {len(trace) - 1} accepted steps")
print("monotone:", bool(np.all(np.diff(trace) <= 0)))
for name, value in theta.sigmas.items():
    print(f"  {name:12s} {value:.4g}")
print("length-scales at candidates [m]:", np.round(model.L, 2))
