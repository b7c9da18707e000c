"""Line extraction over ground candidates and pseudo-input (support set) selection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, TooFewCandidates
from .grid import GroundCandidates


class Reason(str, Enum):
    SLOPE_CHANGE = "SlopeChange"
    RESIDUAL_JUMP = "ResidualJump"
    GAP_IN_RANGE = "GapInRange"


@dataclass(frozen=True)
class LineParams:
    tau_fit: float = 0.08
    tau_slope: float = 0.25
    tau_gap: float = 5.0
    tau_angle_deg: float = 10.0
    l_min: float = 0.5
    l_max: float = 50.0

    def __post_init__(self):
        for name in ("tau_fit", "tau_slope", "tau_gap", "tau_angle_deg", "l_min"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if not self.l_max > self.l_min:
            raise ConfigError("l_max must exceed l_min")

    @property
    def tau_angle(self):
        return math.radians(self.tau_angle_deg)


@dataclass(frozen=True)
class LineSegment:
    start: int
    end: int
    slope: float
    intercept: float
    rms_residual: float
    mean_vector_angle: float


@dataclass(frozen=True)
class CriticalPoint:
    index: int
    reason: Reason


@dataclass
class SupportSet:
    """Latent-process training data: locations r_bar and log length-scale targets."""

    r: np.ndarray
    l: np.ndarray
    owner: np.ndarray
    candidate_index: np.ndarray

    def __len__(self):
        return self.r.shape[0]


def fit_line(r, z):
    """Least-squares ``z = slope * r + intercept``; returns (slope, intercept, rms)."""
    rm, zm = r.mean(), z.mean()
    dr, dz = r - rm, z - zm
    srr = dr @ dr
    slope = (dr @ dz) / srr if srr > 0 else 0.0
    intercept = zm - slope * rm
    res = dz - slope * dr
    return float(slope), float(intercept), float(math.sqrt(res @ res / r.shape[0]))


def _mean_vector_angle(r, z):
    if r.shape[0] < 2:
        return 0.0
    return float(math.atan2(np.mean(z[1:] - z[0]), np.mean(r[1:] - r[0])))


def line_from_span(r, z, start, end):
    """Fit the candidates ``start..end`` (inclusive) as one LineSegment."""
    r, z = np.asarray(r, float), np.asarray(z, float)
    rs, zs = r[start:end + 1], z[start:end + 1]
    slope, intercept, rms = fit_line(rs, zs)
    return LineSegment(start, end, slope, intercept, rms, _mean_vector_angle(rs, zs))


def extract_lines(candidates: GroundCandidates, params: LineParams = LineParams()):
    """Split the candidate sequence into line segments by incremental fitting.

    A line is closed at the previous candidate (which becomes a critical point
    shared with the next line) when the next candidate is farther than
    ``tau_gap`` in r, departs from the line with a chord slope off by more than
    ``tau_slope``, or would raise the fit's rms residual above ``tau_fit``.
    """
    r, z = np.asarray(candidates.r, float), np.asarray(candidates.z, float)
    n = r.shape[0]
    if n < 2:
        raise TooFewCandidates(f"need at least 2 candidates, got {n}")
    rl, zl = r.tolist(), z.tolist()
    lines, critical = [], []
    start = 0
    acc = _RunningFit(rl[0], zl[0], rl[1], zl[1])
    for k in range(2, n):
        dr = rl[k] - rl[k - 1]
        reason = None
        if dr > params.tau_gap:
            reason = Reason.GAP_IN_RANGE
        else:
            slope, intercept = acc.line()
            if dr > 0:
                chord = (zl[k] - (slope * rl[k - 1] + intercept)) / dr
                if abs(chord - slope) > params.tau_slope:
                    reason = Reason.SLOPE_CHANGE
            if reason is None and acc.rms_with(rl[k], zl[k]) > params.tau_fit:
                reason = Reason.RESIDUAL_JUMP
        if reason is not None:
            lines.append(line_from_span(r, z, start, k - 1))
            critical.append(CriticalPoint(k - 1, reason))
            start = k - 1
            acc = _RunningFit(rl[k - 1], zl[k - 1], rl[k], zl[k])
        else:
            acc.add(rl[k], zl[k])
    lines.append(line_from_span(r, z, start, n - 1))
    return lines, critical


class _RunningFit:
    """Least-squares line over a growing point set, kept as shifted moments."""

    def __init__(self, r0, z0, r1, z1):
        self.r_ref, self.z_ref = r0, z0
        self.n = 0
        self.sr = self.sz = self.srr = self.srz = self.szz = 0.0
        self.add(r0, z0)
        self.add(r1, z1)

    def add(self, r, z):
        r -= self.r_ref
        z -= self.z_ref
        self.n += 1
        self.sr += r
        self.sz += z
        self.srr += r * r
        self.srz += r * z
        self.szz += z * z

    @staticmethod
    def _fit(n, sr, sz, srr, srz, szz):
        cov_rr = srr - sr * sr / n
        cov_rz = srz - sr * sz / n
        slope = cov_rz / cov_rr if cov_rr > 0 else 0.0
        sse = (szz - sz * sz / n) - slope * cov_rz
        return slope, math.sqrt(max(sse, 0.0) / n)

    def line(self):
        slope, _ = self._fit(self.n, self.sr, self.sz, self.srr, self.srz, self.szz)
        intercept = self.z_ref + (self.sz - slope * self.sr) / self.n - slope * self.r_ref
        return slope, intercept

    def rms_with(self, r, z):
        r -= self.r_ref
        z -= self.z_ref
        return self._fit(self.n + 1, self.sr + r, self.sz + z, self.srr + r * r,
                         self.srz + r * z, self.szz + z * z)[1]


def select_pseudo_inputs(candidates: GroundCandidates, lines, params: LineParams = LineParams()):
    """Choose support locations per line by angular deviation from the mean vector.

    Candidates whose vector from the line's first point deviates from the mean
    vector by at most ``tau_angle`` are kept; a line's endpoints are always kept
    and lines of three or fewer candidates are kept whole. Every entry's target
    is the log of its line's clamped radial span. A critical point shared by two
    lines takes the smaller target.
    """
    r, z = np.asarray(candidates.r, float), np.asarray(candidates.z, float)
    chosen = {}
    for li, line in enumerate(lines):
        idx = np.arange(line.start, line.end + 1)
        span = r[line.end] - r[line.start]
        target = math.log(min(max(span, params.l_min), params.l_max))
        if idx.shape[0] <= 3:
            keep = idx
        else:
            ang = np.arctan2(z[idx[1:]] - z[line.start], r[idx[1:]] - r[line.start])
            dev = np.abs(ang - line.mean_vector_angle)
            keep = np.concatenate(([line.start], idx[1:][dev <= params.tau_angle], [line.end]))
        for k in keep:
            k = int(k)
            if k not in chosen or target < chosen[k][0]:
                chosen[k] = (target, li)
    order = sorted(chosen)
    return SupportSet(
        r=r[order] if order else np.empty(0),
        l=np.array([chosen[k][0] for k in order]),
        owner=np.array([chosen[k][1] for k in order], dtype=np.int64),
        candidate_index=np.array(order, dtype=np.int64),
    )
