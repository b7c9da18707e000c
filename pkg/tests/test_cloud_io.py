import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpground.cloud_io import (Label, LabeledCloud, PointCloud, load_cloud, load_csv, load_pcd,
                               read_labels, write_labeled, write_pcd)
from gpground.errors import BinaryUnsupported, LengthMismatch, MissingField, ParseError

HEADER = """# .PCD v0.7
VERSION 0.7
FIELDS x y z
SIZE 4 4 4
TYPE F F F
COUNT 1 1 1
WIDTH {n}
HEIGHT 1
POINTS {n}
DATA {data}
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadPcd:
    def test_single_row(self, tmp_path):
        path = write(tmp_path, "a.pcd", HEADER.format(n=1, data="ascii") + "1.0 2.0 0.5\n")
        cloud = load_pcd(path)
        assert len(cloud) == 1
        np.testing.assert_array_equal(cloud.points[0], [1.0, 2.0, 0.5])

    def test_binary_rejected(self, tmp_path):
        path = write(tmp_path, "b.pcd", HEADER.format(n=1, data="binary"))
        with pytest.raises(BinaryUnsupported):
            load_pcd(path)

    def test_nan_rows_dropped_and_counted(self, tmp_path):
        rows = [f"{i}.0 {i}.5 0.1" for i in range(10)]
        rows.insert(4, "nan nan nan")
        path = write(tmp_path, "c.pcd", HEADER.format(n=11, data="ascii") + "\n".join(rows) + "\n")
        cloud = load_pcd(path)
        assert len(cloud) == 10
        assert cloud.dropped == 1
        assert np.isfinite(cloud.points).all()

    def test_missing_field(self, tmp_path):
        text = HEADER.format(n=1, data="ascii").replace("FIELDS x y z", "FIELDS x y intensity")
        with pytest.raises(MissingField):
            load_pcd(write(tmp_path, "d.pcd", text + "1 2 3\n"))

    def test_malformed_row_reports_line(self, tmp_path):
        text = HEADER.format(n=2, data="ascii") + "1 2 3\n1 2 oops\n"
        with pytest.raises(ParseError) as info:
            load_pcd(write(tmp_path, "e.pcd", text))
        assert info.value.line == 12

    def test_extra_fields_and_order(self, tmp_path):
        text = HEADER.format(n=1, data="ascii").replace("FIELDS x y z", "FIELDS intensity z y x")
        text = text.replace("COUNT 1 1 1", "COUNT 1 1 1 1")
        cloud = load_pcd(write(tmp_path, "f.pcd", text + "9 3 2 1\n"))
        np.testing.assert_array_equal(cloud.points[0], [1, 2, 3])

    def test_roundtrip_writer(self, tmp_path):
        cloud = PointCloud([[1.5, -2.25, 0.125], [3, 4, 5]])
        write_pcd(tmp_path / "g.pcd", cloud)
        np.testing.assert_array_equal(load_pcd(tmp_path / "g.pcd").points, cloud.points)


class TestLoadCsv:
    def test_two_points(self, tmp_path):
        cloud = load_csv(write(tmp_path, "a.csv", "0,0,0\n3,4,1\n"))
        np.testing.assert_array_equal(cloud.points, [[0, 0, 0], [3, 4, 1]])

    def test_header_skipped(self, tmp_path):
        cloud = load_csv(write(tmp_path, "b.csv", "x,y,z\n1,2,3\n"), has_header=True)
        assert len(cloud) == 1

    def test_short_row(self, tmp_path):
        with pytest.raises(ParseError) as info:
            load_csv(write(tmp_path, "c.csv", "0,0,0\n1,2\n"))
        assert info.value.line == 2

    def test_autodetect_header(self, tmp_path):
        assert len(load_cloud(write(tmp_path, "d.csv", "x,y,z\n1,2,3\n"))) == 1
        assert len(load_cloud(write(tmp_path, "e.csv", "1,2,3\n"))) == 1


class TestWriteLabeled:
    def test_ground_row(self, tmp_path):
        cloud = PointCloud([[1, 2, 3]])
        lab = LabeledCloud(np.array([Label.GROUND], np.int8), np.array([3.0]), np.array([0.01]),
                           np.array([0.5]))
        write_labeled(tmp_path / "o.csv", lab, cloud)
        lines = (tmp_path / "o.csv").read_text().splitlines()
        assert lines[0] == "x,y,z,label,z_bar,variance,d_stat"
        assert lines[1].split(",")[3] == "1"

    def test_empty_cloud(self, tmp_path):
        write_labeled(tmp_path / "o.csv", LabeledCloud.unassigned(0), PointCloud(np.empty((0, 3))))
        assert (tmp_path / "o.csv").read_text() == "x,y,z,label,z_bar,variance,d_stat\n"

    def test_length_mismatch(self, tmp_path):
        with pytest.raises(LengthMismatch):
            write_labeled(tmp_path / "o.csv", LabeledCloud.unassigned(2), PointCloud([[0, 0, 0]]))

    def test_labels_encoded(self, tmp_path):
        cloud = PointCloud(np.zeros((3, 3)))
        lab = LabeledCloud.unassigned(3)
        lab.label[:] = [1, 0, -1]
        write_labeled(tmp_path / "o.csv", lab, cloud)
        np.testing.assert_array_equal(read_labels(tmp_path / "o.csv"), [1, 0, -1])

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(*[st.floats(-1e4, 1e4, allow_nan=False)] * 3), max_size=20))
    def test_roundtrip(self, tmp_path_factory, rows):
        path = tmp_path_factory.mktemp("rt") / "o.csv"
        cloud = PointCloud(np.asarray(rows, float).reshape(-1, 3))
        write_labeled(path, LabeledCloud.unassigned(len(cloud)), cloud)
        back = load_csv(path, has_header=True)
        assert len(back) == len(cloud)
        np.testing.assert_allclose(back.points, cloud.points, rtol=1e-7, atol=1e-300)
