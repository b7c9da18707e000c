"""
Reading and writing point clouds
================================

Frames are exchanged as ASCII PCD or CSV; labeled output is a CSV with the
posterior mean, variance and normalized distance of every point.
"""

import tempfile
from pathlib import Path

from gpground.cloud_io import load_cloud, read_labels, write_labeled, write_pcd
from gpground.pipeline import ClassifierThresholds, segment_ground
from gpground.synth import TerrainSpec, generate

tmp = Path(tempfile.mkdtemp())
cloud, truth = generate(TerrainSpec(rings=24, points_per_ring=300, max_range=40.0))
write_pcd(tmp / "frame.pcd", cloud)

back = load_cloud(tmp / "frame.pcd")
print(f"read {len(back)} points, dropped {back.dropped} non-finite rows")

out = segment_ground(back, thresholds=ClassifierThresholds(T_d=15.0))
write_labeled(tmp / "labels.csv", out, back)
print((tmp / "labels.csv").read_text().splitlines()[:3])
print("label column matches:", bool((read_labels(tmp / "labels.csv") == out.label).all()))
