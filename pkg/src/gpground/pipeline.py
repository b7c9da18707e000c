"""Per-frame orchestration: grid, lines, MAP training, prediction, classification."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cloud_io import Label, LabeledCloud, PointCloud
from .errors import ConfigError, EmptyCloud, GroundSegError, LengthMismatch
from .gp import GroundModel, HeightKernelParams, LatentKernelParams, LatentModel, height_posterior
from .grid import GridConfig, SegmentData, build_grid, extract_candidates
from .lines import LineParams, extract_lines, select_pseudo_inputs
from .opt import ScgOptions, SegmentProblem, initial_theta, scg_minimize

STAGES = ("grid", "lines", "optimize", "predict")


@dataclass(frozen=True)
class ClassifierThresholds:
    T_d: float = 3.0
    T_V: float = 0.3

    def __post_init__(self):
        if not (self.T_d > 0 and self.T_V > 0):
            raise ConfigError("T_d and T_V must be positive")


def classify_point(z_star, post, sigma_n, th: ClassifierThresholds = ClassifierThresholds()):
    """Return ``(label, d_stat)`` for one height against its posterior.

    ``post`` is any object with scalar ``mean`` and ``variance``.
    """
    label, d = classify_points(np.atleast_1d(z_star), np.atleast_1d(post.mean),
                               np.atleast_1d(post.variance), sigma_n, th)
    return Label(int(label[0])), float(d[0])


def classify_points(z_star, mean, variance, sigma_n, th: ClassifierThresholds):
    d = np.abs(z_star - mean) / np.sqrt(sigma_n**2 + variance)
    ground = (d <= th.T_d) & (variance <= th.T_V)
    return np.where(ground, Label.GROUND, Label.OBSTACLE).astype(np.int8), d


@dataclass
class SegmentResult:
    index: int
    source_index: np.ndarray
    label: np.ndarray
    z_bar: np.ndarray
    variance: np.ndarray
    d_stat: np.ndarray
    diagnostics: dict
    timings: dict
    model: GroundModel | None = None


def _unassigned(seg, diag, timings):
    n = len(seg)
    nan = np.full(n, np.nan)
    return SegmentResult(seg.index, seg.source_index, np.full(n, Label.UNASSIGNED, dtype=np.int8),
                         nan, nan.copy(), nan.copy(), diag, timings)


def train_segment(seg: SegmentData, grid_cfg: GridConfig, line_params: LineParams,
                  scg_opts: ScgOptions, timings=None):
    """Fit the ground model of one segment; returns ``(model, theta, trace, diag)``.

    Returns a None model when the segment has too few candidates.
    """
    timings = {} if timings is None else timings
    t0 = time.perf_counter()
    cands = extract_candidates(seg)
    diag = {"segment": seg.index, "points": len(seg), "candidates": len(cands)}
    if len(cands) < grid_cfg.min_candidates_per_segment:
        diag["status"] = "too few candidates"
        timings["lines"] = time.perf_counter() - t0
        return None, None, None, diag
    lines, critical = extract_lines(cands, line_params)
    support = select_pseudo_inputs(cands, lines, line_params)
    diag.update(lines=len(lines), critical_points=len(critical), support=len(support))
    t1 = time.perf_counter()
    timings["lines"] = t1 - t0

    offset = float(np.median(cands.z))
    problem = SegmentProblem(cands.r, cands.z - offset, support.r, line_params.l_min, line_params.l_max)
    theta, trace = scg_minimize(problem, initial_theta(problem, support.l), scg_opts)
    s = theta.sigmas
    latent = LatentModel.fit(support.r, theta.l_bar,
                             LatentKernelParams(s["sigma_f_bar"], s["sigma_l_bar"], s["sigma_n_bar"]))
    model = GroundModel.fit(cands.r, cands.z, HeightKernelParams(s["sigma_f"], s["sigma_n"]), latent,
                            z_offset=offset, l_min=line_params.l_min, l_max=line_params.l_max)
    timings["optimize"] = time.perf_counter() - t1
    diag.update(theta={k: round(v, 9) for k, v in s.items()},
                l_bar=[round(float(v), 9) for v in theta.l_bar],
                trace_length=len(trace), objective=float(trace[-1]))
    return model, theta, trace, diag


def process_segment(seg: SegmentData, grid_cfg: GridConfig, line_params: LineParams,
                    thresholds: ClassifierThresholds, scg_opts: ScgOptions) -> SegmentResult:
    timings = dict.fromkeys(STAGES[1:], 0.0)
    t_start = time.perf_counter()
    try:
        model, theta, trace, diag = train_segment(seg, grid_cfg, line_params, scg_opts, timings)
        if model is None:
            return _unassigned(seg, diag, timings)
        t0 = time.perf_counter()
        post = height_posterior(model, seg.r)
        label, d = classify_points(seg.z, post.mean, post.variance, model.height.sigma_n, thresholds)
        timings["predict"] = time.perf_counter() - t0
        diag["status"] = "ok"
    except (GroundSegError, np.linalg.LinAlgError, FloatingPointError) as exc:
        diag = {"segment": seg.index, "points": len(seg), "status": f"failed: {exc}"}
        return _unassigned(seg, diag, timings)
    finally:
        wall = time.perf_counter() - t_start
    diag["wall_ms"] = round(1e3 * wall, 3)
    return SegmentResult(seg.index, seg.source_index, label, post.mean, post.variance, d,
                         diag, timings, model)


def segment_ground(cloud: PointCloud, grid_cfg: GridConfig = GridConfig(),
                   line_params: LineParams = LineParams(),
                   thresholds: ClassifierThresholds = ClassifierThresholds(),
                   scg_opts: ScgOptions = ScgOptions(), jobs: int = 1) -> LabeledCloud:
    """Label every point of ``cloud`` as Ground, Obstacle or Unassigned.

    Segments are independent and may be processed by ``jobs`` worker threads;
    the output does not depend on ``jobs``.
    """
    if len(cloud) == 0:
        raise EmptyCloud("point cloud is empty")
    t0 = time.perf_counter()
    grid = build_grid(cloud, grid_cfg)
    t_grid = time.perf_counter() - t0

    def work(seg):
        return process_segment(seg, grid_cfg, line_params, thresholds, scg_opts)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, grid.segments))
    else:
        results = [work(seg) for seg in grid.segments]

    out = LabeledCloud.unassigned(len(cloud))
    out.segment = np.full(len(cloud), -1, dtype=np.int64)
    timings = dict.fromkeys(STAGES, 0.0)
    timings["grid"] = t_grid
    for res in results:
        idx = res.source_index
        out.label[idx] = res.label
        out.z_bar[idx] = res.z_bar
        out.variance[idx] = res.variance
        out.d_stat[idx] = res.d_stat
        out.segment[idx] = res.index
        out.diagnostics.append(res.diagnostics)
        for k, v in res.timings.items():
            timings[k] += v
    timings["total"] = time.perf_counter() - t0
    out.timings = {k: round(1e3 * v, 3) for k, v in timings.items()}
    out.excluded = grid.num_excluded
    return out


@dataclass
class Metrics:
    success_rate: float | None
    ground_precision: float | None
    ground_recall: float | None
    assigned: int
    unassigned: int
    per_segment: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "success_rate": self.success_rate,
            "ground_precision": self.ground_precision,
            "ground_recall": self.ground_recall,
            "assigned": self.assigned,
            "unassigned": self.unassigned,
            "per_segment": self.per_segment,
        }


def _ratio(num, den):
    return float(num) / float(den) if den else None


def evaluate(predicted, truth, segment=None) -> Metrics:
    """Success rate and Ground-class precision/recall over assigned points.

    ``predicted`` is a LabeledCloud or a label array; Unassigned points are
    excluded from every rate and counted separately. Undefined rates are None.
    """
    label = np.asarray(getattr(predicted, "label", predicted))
    truth = np.asarray(truth)
    if label.shape != truth.shape:
        raise LengthMismatch(f"{label.shape[0]} predictions vs {truth.shape[0]} truth labels")
    if segment is None:
        segment = getattr(predicted, "segment", None)
    assigned = label != Label.UNASSIGNED
    correct = assigned & (label == truth)
    pred_g = assigned & (label == Label.GROUND)
    true_g = assigned & (truth == Label.GROUND)
    per_segment = {}
    if segment is not None:
        for m in np.unique(segment[assigned]):
            sel = assigned & (segment == m)
            per_segment[int(m)] = _ratio(np.sum(correct & sel), np.sum(sel))
    return Metrics(
        success_rate=_ratio(correct.sum(), assigned.sum()),
        ground_precision=_ratio(np.sum(pred_g & true_g), pred_g.sum()),
        ground_recall=_ratio(np.sum(pred_g & true_g), true_g.sum()),
        assigned=int(assigned.sum()),
        unassigned=int((~assigned).sum()),
        per_segment=per_segment,
    )


def calibrate_td(frames, T_V=0.3, grid=None):
    """Pick the T_d that maximizes the worst per-frame success rate.

    ``frames`` is a sequence of ``(LabeledCloud, truth)`` pairs produced with
    any thresholds; only their stored ``d_stat`` and ``variance`` are used, so
    no frame is re-segmented. Ties resolve to the smallest T_d.
    """
    grid = np.arange(1.0, 40.01, 0.5) if grid is None else np.asarray(grid, float)
    best_td, best_score = None, -np.inf
    for td in grid:
        th = ClassifierThresholds(T_d=float(td), T_V=T_V)
        worst = np.inf
        for labeled, truth in frames:
            assigned = labeled.label != Label.UNASSIGNED
            pred = np.where((labeled.d_stat <= th.T_d) & (labeled.variance <= th.T_V),
                            Label.GROUND, Label.OBSTACLE)
            worst = min(worst, np.mean(pred[assigned] == np.asarray(truth)[assigned]))
        if worst > best_score:
            best_td, best_score = float(td), worst
    return best_td, float(best_score)


def relabel(labeled: LabeledCloud, th: ClassifierThresholds) -> np.ndarray:
    """Labels under new thresholds, reusing the stored d_stat and variance."""
    assigned = labeled.label != Label.UNASSIGNED
    ground = (labeled.d_stat <= th.T_d) & (labeled.variance <= th.T_V)
    out = np.where(ground, Label.GROUND, Label.OBSTACLE).astype(np.int8)
    out[~assigned] = Label.UNASSIGNED
    return out
