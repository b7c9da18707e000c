"""Segment-wise Gaussian-process ground segmentation for 3-D LiDAR point clouds.

Each angular segment of a polar grid map is modeled by a height GP whose
non-stationary kernel takes point-wise length-scales from a second (latent) GP
over log length-scales, trained jointly by MAP optimization.
"""
from .cloud_io import (Label, LabeledCloud, PointCloud, load_cloud, load_csv, load_pcd,
                       write_labeled, write_pcd)
from .gp import (GroundModel, HeightKernelParams, LatentKernelParams, Posterior,
                 height_posterior, latent_predict, ns_kernel, se_kernel)
from .grid import GridConfig, build_grid, extract_candidates
from .lines import LineParams, extract_lines, select_pseudo_inputs
from .opt import (ScgOptions, SegmentProblem, Theta, fd_gradient, gradient, objective,
                  scg, scg_minimize)
from .pipeline import (ClassifierThresholds, Metrics, calibrate_td, classify_point, evaluate,
                       segment_ground)
from .synth import Box, TerrainSpec, generate, suite_spec

__version__ = "0.1.0"

__all__ = [
    "Box",
    "build_grid",
    "calibrate_td",
    "ClassifierThresholds",
    "classify_point",
    "evaluate",
    "extract_candidates",
    "extract_lines",
    "fd_gradient",
    "generate",
    "gradient",
    "GridConfig",
    "GroundModel",
    "height_posterior",
    "HeightKernelParams",
    "Label",
    "LabeledCloud",
    "latent_predict",
    "LatentKernelParams",
    "LineParams",
    "load_cloud",
    "load_csv",
    "load_pcd",
    "Metrics",
    "ns_kernel",
    "objective",
    "PointCloud",
    "Posterior",
    "scg",
    "scg_minimize",
    "ScgOptions",
    "se_kernel",
    "segment_ground",
    "SegmentProblem",
    "select_pseudo_inputs",
    "suite_spec",
    "TerrainSpec",
    "Theta",
    "write_labeled",
    "write_pcd",
]
