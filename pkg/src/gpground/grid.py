"""Polar grid map: angular segments, range-dependent bins, ground candidates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cloud_io import PointCloud
from .errors import ConfigError, EmptyCloud


@dataclass(frozen=True)
class GridConfig:
    num_segments: int = 36
    r_min: float = 0.5
    r_max: float = 80.0
    bin_growth: float = 1.06
    first_bin_width: float = 1.0
    min_candidates_per_segment: int = 4

    def __post_init__(self):
        if int(self.num_segments) != self.num_segments or self.num_segments < 1:
            raise ConfigError(f"num_segments must be an integer >= 1, got {self.num_segments}")
        if not (self.r_min >= 0 and self.r_max > self.r_min):
            raise ConfigError(f"need 0 <= r_min < r_max, got {self.r_min}, {self.r_max}")
        if not self.bin_growth >= 1:
            raise ConfigError("bin_growth must be >= 1")
        if not self.first_bin_width > 0:
            raise ConfigError("first_bin_width must be > 0")
        if self.min_candidates_per_segment < 1:
            raise ConfigError("min_candidates_per_segment must be >= 1")

    def bin_edges(self) -> np.ndarray:
        """Edges r_min = e_0 < e_1 < ... < e_N = r_max with geometric widths."""
        edges = [self.r_min]
        width = self.first_bin_width
        while edges[-1] + width < self.r_max:
            edges.append(edges[-1] + width)
            width *= self.bin_growth
        edges.append(self.r_max)
        return np.asarray(edges)


@dataclass
class GroundCandidates:
    """Lowest point of every non-empty bin, sorted by ascending r."""

    r: np.ndarray
    z: np.ndarray
    source_index: np.ndarray

    def __len__(self):
        return self.r.shape[0]


@dataclass
class SegmentData:
    index: int
    source_index: np.ndarray
    r: np.ndarray
    z: np.ndarray
    bin: np.ndarray
    candidates: GroundCandidates | None = None

    def __len__(self):
        return self.r.shape[0]


@dataclass
class GridMap:
    segments: list
    excluded: np.ndarray
    edges: np.ndarray
    config: GridConfig = field(repr=False, default=None)

    @property
    def num_excluded(self):
        return int(self.excluded.shape[0])


def segment_of(x, y, num_segments):
    ang = np.mod(np.arctan2(y, x), 2 * math.pi)
    seg = np.floor(num_segments * ang / (2 * math.pi)).astype(np.int64)
    return np.minimum(seg, num_segments - 1)


def build_grid(cloud: PointCloud, config: GridConfig) -> GridMap:
    """Assign every in-range point to one (segment, bin) cell.

    Points with r outside [r_min, r_max] are listed in ``GridMap.excluded``.
    """
    if len(cloud) == 0:
        raise EmptyCloud("point cloud is empty")
    x, y, z = cloud.x, cloud.y, cloud.z
    r = np.hypot(x, y)
    inside = (r >= config.r_min) & (r <= config.r_max)
    idx = np.flatnonzero(inside)
    edges = config.bin_edges()
    seg = segment_of(x[idx], y[idx], config.num_segments)
    bins = np.clip(np.searchsorted(edges, r[idx], side="right") - 1, 0, len(edges) - 2)

    order = np.argsort(seg, kind="stable")
    seg_sorted = seg[order]
    bounds = np.searchsorted(seg_sorted, np.arange(config.num_segments + 1))
    segments = []
    for m in range(config.num_segments):
        sel = order[bounds[m]:bounds[m + 1]]
        src = idx[sel]
        segments.append(SegmentData(m, src, r[src], z[src], bins[sel]))
    return GridMap(segments, np.flatnonzero(~inside), edges, config)


def extract_candidates(segment: SegmentData) -> GroundCandidates:
    """Pick the minimum-height point per non-empty bin.

    Ties on z go to the smaller r, then the smaller source index.
    """
    if len(segment) == 0:
        empty = np.empty(0)
        cands = GroundCandidates(empty, empty.copy(), np.empty(0, dtype=np.int64))
    else:
        order = np.lexsort((segment.source_index, segment.r, segment.z, segment.bin))
        b = segment.bin[order]
        first = np.ones(b.shape[0], dtype=bool)
        first[1:] = b[1:] != b[:-1]
        pick = order[first]
        cands = GroundCandidates(segment.r[pick], segment.z[pick], segment.source_index[pick])
    segment.candidates = cands
    return cands
