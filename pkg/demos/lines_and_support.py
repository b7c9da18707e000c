"""
Critical points, line segments and pseudo-inputs
================================================

Ground candidates of one angular segment are split into straight runs where
the slope changes, the fit degrades or a range gap opens. Each run then
contributes support points for the latent length-scale process.
"""

import numpy as np

from gpground.grid import GridConfig, build_grid, extract_candidates
from gpground.lines import LineParams, extract_lines, select_pseudo_inputs
from gpground.synth import TerrainSpec, generate

# a road that is flat for 20 m and then climbs at 15 %
spec = TerrainSpec(kind="piecewise", breakpoints=(20.0,), grades=(0.0, 0.15), noise_sigma=0.01)
cloud, _ = generate(spec)
grid = build_grid(cloud, GridConfig())
seg = grid.segments[0]
cand = extract_candidates(seg)
print(f"segment 0: {len(seg)} points, {len(cand)} ground candidates")

params = LineParams()
lines, critical = extract_lines(cand, params)
for ln in lines:
    print(f"line r {cand.r[ln.start]:6.2f} .. {cand.r[ln.end]:6.2f}  slope {ln.slope:+.3f}"
          f"  rms {ln.rms_residual:.3f}")
for cp in critical:
    print(f"critical point at r = {cand.r[cp.index]:.2f} ({cp.reason.value})")

support = select_pseudo_inputs(cand, lines, params)
print("\nsupport r   ", np.round(support.r, 1))
print("target L [m]", np.round(np.exp(support.l), 1))
