import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gpground.cloud_io import PointCloud
from gpground.errors import ConfigError, EmptyCloud
from gpground.grid import GridConfig, build_grid, extract_candidates


def seg_of(grid, source):
    for seg in grid.segments:
        if source in seg.source_index:
            return seg.index
    return None


def test_zero_angle_segment(cloud_of):
    grid = build_grid(cloud_of([[1, 0, 0.3]]), GridConfig(num_segments=8))
    assert seg_of(grid, 0) == 0


def test_radial_projection(cloud_of):
    grid = build_grid(cloud_of([[3, 4, 1.0]]), GridConfig())
    seg = grid.segments[seg_of(grid, 0)]
    assert seg.r[0] == 5.0
    assert seg.z[0] == 1.0


def test_quarter_turn_segment(cloud_of):
    grid = build_grid(cloud_of([[0, 1, 0.0]]), GridConfig(num_segments=4))
    assert seg_of(grid, 0) == 1


def test_negative_angles_wrap(cloud_of):
    grid = build_grid(cloud_of([[0, -1, 0.0], [1, -1e-12, 0.0]]), GridConfig(num_segments=4))
    assert seg_of(grid, 0) == 3
    assert seg_of(grid, 1) == 3


def test_empty_cloud():
    with pytest.raises(EmptyCloud):
        build_grid(PointCloud(np.empty((0, 3))), GridConfig())


def test_out_of_range_excluded(cloud_of):
    grid = build_grid(cloud_of([[0.1, 0, 0], [100, 0, 0], [5, 0, 0]]), GridConfig())
    assert grid.num_excluded == 2
    assert sorted(grid.excluded) == [0, 1]


def test_bin_edges_cover_range():
    cfg = GridConfig()
    edges = cfg.bin_edges()
    assert edges[0] == cfg.r_min and edges[-1] == cfg.r_max
    assert np.all(np.diff(edges) > 0)
    widths = np.diff(edges)[:-1]
    np.testing.assert_allclose(widths[1:] / widths[:-1], cfg.bin_growth)


@pytest.mark.parametrize("kwargs", [
    dict(num_segments=0), dict(r_min=5, r_max=4), dict(bin_growth=0.9), dict(first_bin_width=0),
])
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        GridConfig(**kwargs)


class TestCandidates:
    def segment(self, rows, cfg=GridConfig(num_segments=1)):
        return build_grid(PointCloud(rows), cfg).segments[0]

    def test_min_of_bin(self):
        seg = self.segment([[2.1, 0, 0.2], [2.2, 0, -0.1], [2.3, 0, 0.5]])
        c = extract_candidates(seg)
        assert len(c) == 1 and c.z[0] == -0.1

    def test_empty_bins_skipped(self):
        seg = self.segment([[1.0, 0, 0.0], [10.0, 0, 0.0]])
        c = extract_candidates(seg)
        assert len(c) == 2

    def test_tie_break_smaller_r(self):
        cfg = GridConfig(num_segments=1, r_min=0.5, first_bin_width=5.0, bin_growth=1.0)
        seg = self.segment([[3.0, 0, 0.1], [2.0, 0, 0.1]], cfg)
        c = extract_candidates(seg)
        assert c.r[0] == 2.0 and c.source_index[0] == 1

    def test_tie_break_source_index(self):
        seg = self.segment([[0, 2.0, 0.1], [2.0, 0, 0.1]])
        c = extract_candidates(seg)
        assert c.source_index[0] == 0

    def test_empty_segment(self):
        grid = build_grid(PointCloud([[1, 0, 0]]), GridConfig(num_segments=4))
        assert len(extract_candidates(grid.segments[2])) == 0


points = st.lists(
    st.tuples(st.floats(0.0, 2 * math.pi, allow_nan=False), st.floats(0.0, 90.0),
              st.floats(-3.0, 3.0)),
    min_size=1, max_size=80)


def polar_cloud(pts):
    a = np.array([p[0] for p in pts])
    r = np.array([p[1] for p in pts])
    return PointCloud(np.column_stack([r * np.cos(a), r * np.sin(a), [p[2] for p in pts]]))


@settings(max_examples=60, deadline=None)
@given(points, st.integers(1, 40))
def test_partition(pts, m):
    cloud = polar_cloud(pts)
    grid = build_grid(cloud, GridConfig(num_segments=m))
    assigned = np.concatenate([s.source_index for s in grid.segments])
    assert len(assigned) + grid.num_excluded == len(cloud)
    assert len(set(assigned.tolist()) | set(grid.excluded.tolist())) == len(cloud)


@settings(max_examples=60, deadline=None)
@given(points, st.integers(1, 40))
def test_candidates_strictly_increase(pts, m):
    grid = build_grid(polar_cloud(pts), GridConfig(num_segments=m))
    for seg in grid.segments:
        c = extract_candidates(seg)
        assert np.all(np.diff(c.r) > 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 36), st.lists(st.tuples(st.integers(0, 35), st.floats(0.05, 0.95),
                                              st.floats(1.0, 70.0), st.floats(-1, 1)),
                                    min_size=1, max_size=60))
def test_rotation_equivariance(m, pts):
    # angles kept away from segment boundaries so exact 2*pi/m rotation is unambiguous
    width = 2 * math.pi / m
    a = np.array([(s % m + f) * width for s, f, _, _ in pts])
    r = np.array([p[2] for p in pts])
    z = np.array([p[3] for p in pts])
    cfg = GridConfig(num_segments=m)
    edges = cfg.bin_edges()
    assume(np.min(np.abs(r[:, None] - edges[None, :])) > 1e-9)
    base = build_grid(PointCloud(np.column_stack([r * np.cos(a), r * np.sin(a), z])), cfg)
    a2 = a + width
    rot = build_grid(PointCloud(np.column_stack([r * np.cos(a2), r * np.sin(a2), z])), cfg)
    for seg in base.segments:
        other = rot.segments[(seg.index + 1) % m]
        assert Counter(seg.source_index.tolist()) == Counter(other.source_index.tolist())
        c1, c2 = extract_candidates(seg), extract_candidates(other)
        np.testing.assert_allclose(c1.r, c2.r, rtol=1e-12)
        np.testing.assert_array_equal(c1.z, c2.z)
