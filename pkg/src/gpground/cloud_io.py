"""Point-cloud ingestion (ASCII PCD, CSV) and labeled-cloud output."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import BinaryUnsupported, LengthMismatch, MissingField, ParseError


class Label(IntEnum):
    OBSTACLE = 0
    GROUND = 1
    UNASSIGNED = -1


@dataclass
class PointCloud:
    """Ordered (N, 3) array of finite x, y, z coordinates in meters.

    Row indices are the stable point identifiers used by every later stage.
    """

    points: np.ndarray
    frame_id: str | None = None
    dropped: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        self.points = pts

    def __len__(self):
        return self.points.shape[0]

    @property
    def x(self):
        return self.points[:, 0]

    @property
    def y(self):
        return self.points[:, 1]

    @property
    def z(self):
        return self.points[:, 2]


@dataclass
class LabeledCloud:
    label: np.ndarray
    z_bar: np.ndarray
    variance: np.ndarray
    d_stat: np.ndarray
    segment: np.ndarray | None = None
    excluded: int = 0
    diagnostics: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def __len__(self):
        return self.label.shape[0]

    @classmethod
    def unassigned(cls, n):
        nan = np.full(n, np.nan)
        return cls(np.full(n, Label.UNASSIGNED, dtype=np.int8), nan, nan.copy(), nan.copy())


def _finite_cloud(rows, frame_id=None):
    arr = np.asarray(rows, dtype=float).reshape(-1, 3)
    keep = np.isfinite(arr).all(axis=1)
    return PointCloud(arr[keep], frame_id=frame_id, dropped=int((~keep).sum()))


def load_pcd(path) -> PointCloud:
    """Read an ASCII PCD file, keeping the x, y, z fields.

    Rows with any non-finite coordinate are dropped; the count is kept in
    ``PointCloud.dropped``.
    """
    path = Path(path)
    fields = None
    counts = None
    rows = []
    in_data = False
    with path.open("r", encoding="ascii", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if not in_data:
                if line.startswith("#"):
                    continue
                key, _, rest = line.partition(" ")
                key = key.upper()
                if key == "FIELDS":
                    fields = rest.split()
                elif key == "COUNT":
                    counts = [int(c) for c in rest.split()]
                elif key == "DATA":
                    if rest.strip().lower() != "ascii":
                        raise BinaryUnsupported(f"{path}: DATA {rest.strip()} is not supported")
                    if fields is None or not {"x", "y", "z"} <= set(fields):
                        raise MissingField(f"{path}: FIELDS must contain x y z")
                    counts = counts or [1] * len(fields)
                    if len(counts) != len(fields):
                        raise ParseError("COUNT and FIELDS lengths differ", lineno)
                    offsets = np.cumsum([0] + counts[:-1])
                    cols = [int(offsets[fields.index(k)]) for k in ("x", "y", "z")]
                    width = int(sum(counts))
                    in_data = True
                continue
            parts = line.split()
            if len(parts) < width:
                raise ParseError(f"expected {width} values, got {len(parts)}", lineno)
            try:
                rows.append([float(parts[c]) for c in cols])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    if not in_data:
        if fields is None or not {"x", "y", "z"} <= set(fields):
            raise MissingField(f"{path}: FIELDS must contain x y z")
        raise ParseError(f"{path}: no DATA header")
    return _finite_cloud(rows, frame_id=path.stem)


def load_csv(path, has_header=False) -> PointCloud:
    """Read comma-separated x, y, z (extra columns ignored)."""
    path = Path(path)
    rows = []
    with path.open("r", newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if has_header and lineno == 1:
                continue
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) < 3:
                raise ParseError(f"expected at least 3 columns, got {len(rec)}", lineno)
            try:
                rows.append([float(c) for c in rec[:3]])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    return _finite_cloud(rows, frame_id=path.stem)


def _fmt(v):
    v = float(v)
    return "nan" if math.isnan(v) else format(v, ".9g")


LABELED_COLUMNS = ("x", "y", "z", "label", "z_bar", "variance", "d_stat")


def write_labeled(path, cloud: LabeledCloud, original: PointCloud) -> None:
    """Write ``x,y,z,label,z_bar,variance,d_stat`` rows (label 1/0/-1)."""
    if len(cloud) != len(original):
        raise LengthMismatch(
            f"labeled cloud has {len(cloud)} points, original has {len(original)}"
        )
    pts = original.points
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(LABELED_COLUMNS) + "\n")
        for i in range(len(original)):
            fh.write(
                f"{_fmt(pts[i, 0])},{_fmt(pts[i, 1])},{_fmt(pts[i, 2])},{int(cloud.label[i])},"
                f"{_fmt(cloud.z_bar[i])},{_fmt(cloud.variance[i])},{_fmt(cloud.d_stat[i])}\n"
            )


def read_labels(path) -> np.ndarray:
    """Read the ``label`` column of a CSV with a header row."""
    with Path(path).open("r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or "label" not in header:
            raise MissingField(f"{path}: no 'label' column")
        col = header.index("label")
        out = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                out.append(int(float(rec[col])))
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), lineno) from None
    return np.asarray(out, dtype=np.int8)


def write_cloud_csv(path, cloud: PointCloud, labels=None) -> None:
    """Write ``x,y,z`` (plus ``label`` when given) with a header row."""
    with Path(path).open("w", newline="") as fh:
        fh.write("x,y,z,label\n" if labels is not None else "x,y,z\n")
        for i, (x, y, z) in enumerate(cloud.points):
            row = f"{_fmt(x)},{_fmt(y)},{_fmt(z)}"
            if labels is not None:
                row += f",{int(labels[i])}"
            fh.write(row + "\n")


def write_pcd(path, cloud: PointCloud) -> None:
    """Write an ASCII PCD v0.7 file with x y z float fields."""
    n = len(cloud)
    header = (
        "# .PCD v0.7 - Point Cloud Data file format\n"
        "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
        f"WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA ascii\n"
    )
    with Path(path).open("w") as fh:
        fh.write(header)
        for x, y, z in cloud.points:
            fh.write(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}\n")


def load_cloud(path, has_header=None) -> PointCloud:
    """Dispatch on suffix: ``.pcd`` is PCD, anything else CSV.

    For CSV, ``has_header=None`` treats a non-numeric first cell as a header.
    """
    path = Path(path)
    if path.suffix.lower() == ".pcd":
        return load_pcd(path)
    if has_header is None:
        with path.open("r") as fh:
            first = fh.readline().split(",")[0].strip()
        try:
            float(first)
            has_header = False
        except ValueError:
            has_header = bool(first)
    return load_csv(path, has_header=has_header)
