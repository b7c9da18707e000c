"""Labeled synthetic LiDAR-like frames over parametric terrains."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .cloud_io import Label, PointCloud
from .errors import InvalidSpec

KINDS = ("flat", "sloped", "bumpy", "piecewise")


@dataclass(frozen=True)
class Box:
    center: tuple
    extent: tuple
    height: float

    def contains(self, x, y):
        cx, cy = self.center
        ex, ey = self.extent
        return (np.abs(x - cx) <= ex / 2) & (np.abs(y - cy) <= ey / 2)


@dataclass(frozen=True)
class TerrainSpec:
    kind: str = "flat"
    grade: float = 0.0
    amplitude: float = 0.0
    wavelength: float = 10.0
    angular_modulation: float = 0.0
    breakpoints: tuple = ()
    grades: tuple = (0.0,)
    obstacles: tuple = ()
    noise_sigma: float = 0.02
    rings: int = 64
    points_per_ring: int = 1094
    min_range: float = 2.0
    max_range: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown terrain kind {self.kind!r}; expected one of {KINDS}")
        if not self.wavelength > 0:
            raise InvalidSpec("wavelength must be positive")
        if self.rings < 1 or self.points_per_ring < 1:
            raise InvalidSpec("rings and points_per_ring must be >= 1")
        if not (0 < self.min_range < self.max_range):
            raise InvalidSpec("need 0 < min_range < max_range")
        if self.noise_sigma < 0:
            raise InvalidSpec("noise_sigma must be >= 0")
        if self.kind == "piecewise":
            if len(self.grades) != len(self.breakpoints) + 1:
                raise InvalidSpec("piecewise terrain needs len(grades) == len(breakpoints) + 1")
            if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
                raise InvalidSpec("breakpoints must increase")
        for box in self.obstacles:
            if min(box.extent) <= 0:
                raise InvalidSpec("box extents must be positive")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidSpec(f"unknown terrain keys: {sorted(unknown)}")
        try:
            boxes = tuple(Box(tuple(b["center"]), tuple(b["extent"]), float(b["height"]))
                          for b in d.pop("obstacles", ()))
            for key in ("breakpoints", "grades"):
                if key in d:
                    d[key] = tuple(float(v) for v in d[key])
            return cls(obstacles=boxes, **d)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidSpec):
                raise
            raise InvalidSpec(f"malformed terrain spec: {exc}") from None

    @classmethod
    def from_json(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise InvalidSpec(f"{path}: expected a JSON object")
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)

    def terrain(self, r, phi=0.0):
        """Ground height at radius ``r`` (and azimuth ``phi`` for bumpy terrain)."""
        r = np.asarray(r, float)
        if self.kind == "flat":
            return np.zeros_like(r)
        if self.kind == "sloped":
            return self.grade * r
        if self.kind == "bumpy":
            return self.amplitude * np.sin(2 * math.pi * r / self.wavelength
                                           + self.angular_modulation * np.sin(phi))
        z = np.zeros_like(r)
        knots = (0.0,) + tuple(self.breakpoints)
        for i, g in enumerate(self.grades):
            hi = knots[i + 1] if i + 1 < len(knots) else np.inf
            z += g * np.clip(r - knots[i], 0.0, hi - knots[i])
        return z


def ring_radii(spec: TerrainSpec):
    return np.geomspace(spec.min_range, spec.max_range, spec.rings)


def generate(spec: TerrainSpec):
    """Sample a frame ring by ring; returns ``(PointCloud, labels)``.

    Ring radii grow geometrically so point density falls with range. Each ring
    draws its azimuth phase and noise from its own seeded stream. Points landing
    on a box footprint take the box-top height and the Obstacle label.
    """
    radii = ring_radii(spec)
    streams = np.random.SeedSequence(spec.seed).spawn(spec.rings)
    k = np.arange(spec.points_per_ring)
    xs, ys, zs = [], [], []
    for radius, ss in zip(radii, streams):
        rng = np.random.default_rng(ss)
        phi = (rng.uniform(0, 2 * math.pi) + 2 * math.pi * k / spec.points_per_ring) % (2 * math.pi)
        noise = np.clip(rng.standard_normal(spec.points_per_ring), -5.0, 5.0) * spec.noise_sigma
        xs.append(radius * np.cos(phi))
        ys.append(radius * np.sin(phi))
        zs.append(spec.terrain(np.full_like(phi, radius), phi) + noise)
    x, y, z = np.concatenate(xs), np.concatenate(ys), np.concatenate(zs)
    noise = z - spec.terrain(np.hypot(x, y), np.arctan2(y, x))
    labels = np.full(x.shape[0], Label.GROUND, dtype=np.int8)
    for box in spec.obstacles:
        hit = box.contains(x, y)
        cx, cy = box.center
        top = float(spec.terrain(math.hypot(cx, cy), math.atan2(cy, cx))) + box.height
        z[hit] = top + noise[hit]
        labels[hit] = Label.OBSTACLE
    return PointCloud(np.column_stack([x, y, z]), frame_id=f"synth-{spec.kind}-{spec.seed}"), labels


SUITES = {
    "flat": {"kind": "flat"},
    "sloped": {"kind": "sloped", "grade": 0.15},
    "piecewise": {"kind": "piecewise", "breakpoints": (20.0,), "grades": (0.0, 0.15)},
    "bumpy": {"kind": "bumpy", "amplitude": 0.3, "wavelength": 15.0},
}


def random_boxes(rng, count, r_range=(6.0, 40.0)):
    """Axis-aligned boxes 1.5-3 m wide and 0.5-1.5 m tall at random bearings."""
    boxes = []
    for _ in range(count):
        r, phi = rng.uniform(*r_range), rng.uniform(0, 2 * math.pi)
        boxes.append(Box((r * math.cos(phi), r * math.sin(phi)),
                         tuple(rng.uniform(1.5, 3.0, 2)), float(rng.uniform(0.5, 1.5))))
    return tuple(boxes)


def suite_spec(name, seed, obstacles=6, **overrides):
    """Terrain of a named benchmark suite with seed-dependent obstacle boxes."""
    if name not in SUITES:
        raise InvalidSpec(f"unknown suite {name!r}; expected one of {sorted(SUITES)}")
    boxes = random_boxes(np.random.default_rng([seed, 7]), obstacles)
    return TerrainSpec(**{**SUITES[name], "obstacles": boxes, "seed": seed, **overrides})
