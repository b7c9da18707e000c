"""Command-line entry point: segment, synth, eval, bench, gradcheck.

Exit codes: 0 success, 1 check failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .cloud_io import (LabeledCloud, load_cloud, read_labels, write_cloud_csv, write_labeled,
                       write_pcd)
from .errors import ConfigError, GroundSegError
from .grid import GridConfig
from .lines import LineParams
from .opt import ScgOptions, gradcheck
from .pipeline import ClassifierThresholds, evaluate, segment_ground
from .synth import TerrainSpec, generate

GRADCHECK_TOLERANCE = 1e-4


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = GridConfig()
    lines: LineParams = LineParams()
    thresholds: ClassifierThresholds = ClassifierThresholds()
    scg: ScgOptions = ScgOptions()
    jobs: int = 1
    seed: int = 0

    SECTIONS = {"grid": GridConfig, "lines": LineParams, "thresholds": ClassifierThresholds,
                "scg": ScgOptions}

    @classmethod
    def keys(cls):
        out = {"jobs": None, "seed": None}
        for section, typ in cls.SECTIONS.items():
            for f in fields(typ):
                out[f.name] = section
        return out

    @classmethod
    def from_mapping(cls, values):
        """Build from flat ``key: value`` pairs; unknown keys are rejected."""
        known = cls.keys()
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        parts = {s: {} for s in cls.SECTIONS}
        for key, value in values.items():
            if known[key] is not None:
                parts[known[key]][key] = value
        try:
            built = {s: typ(**parts[s]) for s, typ in cls.SECTIONS.items()}
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        jobs = int(values.get("jobs", 1))
        if jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return cls(jobs=jobs, seed=int(values.get("seed", 0)), **built)


FLAG_KEYS = {"segments": "num_segments", "td": "T_d", "tv": "T_V", "rmin": "r_min",
             "rmax": "r_max", "jobs": "jobs", "seed": "seed"}


def _add_config_flags(p):
    p.add_argument("--config", type=Path, help="flat JSON key/value config file")
    p.add_argument("--segments", type=int, help="number of angular segments M")
    p.add_argument("--td", type=float, help="normalized-distance threshold T_d")
    p.add_argument("--tv", type=float, help="variance threshold T_V")
    p.add_argument("--rmin", type=float, help="minimum radial range (m)")
    p.add_argument("--rmax", type=float, help="maximum radial range (m)")
    p.add_argument("--jobs", type=int, help="per-segment worker threads")
    p.add_argument("--seed", type=int, help="random seed")


def _run_config(args) -> RunConfig:
    values = {}
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        values.update(data)
    for flag, key in FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    return RunConfig.from_mapping(values)


def _require_file(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such file: {path}")


def _summary(labeled: LabeledCloud, n_points, wall_ms):
    return {
        "points": n_points,
        "excluded": int(getattr(labeled, "excluded", 0)),
        "counts": {name: int(np.sum(labeled.label == v))
                   for name, v in (("ground", 1), ("obstacle", 0), ("unassigned", -1))},
        "wall_time_ms": round(wall_ms, 3),
        "stages_ms": labeled.timings,
        "segments": labeled.diagnostics,
    }


def cmd_segment(args):
    cfg = _run_config(args)
    _require_file(args.input)
    cloud = load_cloud(args.input)
    t0 = time.perf_counter()
    labeled = segment_ground(cloud, cfg.grid, cfg.lines, cfg.thresholds, cfg.scg, jobs=cfg.jobs)
    wall = 1e3 * (time.perf_counter() - t0)
    write_labeled(args.output, labeled, cloud)
    summary = json.dumps(_summary(labeled, len(cloud), wall), indent=2)
    if args.summary is not None:
        Path(args.summary).write_text(summary + "\n")
    else:
        print(summary)
    return 0


def cmd_synth(args):
    _require_file(args.spec)
    spec = TerrainSpec.from_json(args.spec)
    if args.seed is not None:
        spec = TerrainSpec.from_dict({**spec.to_dict(), "seed": args.seed,
                                      "obstacles": [vars(b) for b in spec.obstacles]})
    cloud, truth = generate(spec)
    out = Path(args.output)
    if out.suffix.lower() == ".pcd":
        write_pcd(out, cloud)
        write_cloud_csv(out.with_suffix(".truth.csv"), cloud, truth)
    else:
        write_cloud_csv(out, cloud, truth)
    print(json.dumps({"points": len(cloud), "ground": int(np.sum(truth == 1)),
                      "obstacle": int(np.sum(truth == 0)), "output": str(out)}))
    return 0


def cmd_eval(args):
    for p in (args.predicted, args.truth):
        _require_file(p)
    metrics = evaluate(read_labels(args.predicted), read_labels(args.truth))
    print(json.dumps(metrics.to_dict(), indent=2))
    return 0


def cmd_bench(args):
    cfg = _run_config(args)
    _require_file(args.spec)
    if args.repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    cloud, _ = generate(TerrainSpec.from_json(args.spec))

    def run():
        t0 = time.perf_counter()
        lab = segment_ground(cloud, cfg.grid, cfg.lines, cfg.thresholds, cfg.scg, jobs=cfg.jobs)
        return 1e3 * (time.perf_counter() - t0), lab.timings

    run()  # warm-up, excluded
    times, stages = [], []
    for _ in range(args.repetitions):
        t, st = run()
        times.append(round(t, 3))
        stages.append(st)
    keys = [k for k in stages[0] if k != "total"]
    print(json.dumps({
        "points": len(cloud),
        "segments": cfg.grid.num_segments,
        "jobs": cfg.jobs,
        "repetitions": args.repetitions,
        "timings_ms": times,
        "mean_ms": round(float(np.mean(times)), 3),
        "min_ms": round(float(np.min(times)), 3),
        "stages_mean_ms": {k: round(float(np.mean([s[k] for s in stages])), 3) for k in keys},
    }, indent=2))
    return 0


def cmd_gradcheck(args):
    rows = gradcheck(seed=args.seed, sizes=tuple(args.sizes), count=args.count,
                     corrupt=args.corrupt_gradient)
    out = open(args.report, "w", newline="") if args.report else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.report:
            out.close()
    worst = max(r["relative_error"] for r in rows)
    ok = worst < GRADCHECK_TOLERANCE
    print(f"gradcheck: {len(rows)} coordinates, max relative error {worst:.3e} "
          f"({'ok' if ok else 'FAIL'}, tolerance {GRADCHECK_TOLERANCE:g})", file=sys.stderr)
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="gpground", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="label a point cloud as ground/obstacle")
    p.add_argument("input", type=Path, help="ASCII .pcd or .csv point cloud")
    p.add_argument("-o", "--output", type=Path, required=True, help="labeled CSV output")
    p.add_argument("--summary", type=Path, help="write the JSON run summary here instead of stdout")
    _add_config_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("synth", help="generate a labeled synthetic frame")
    p.add_argument("spec", type=Path, help="terrain spec JSON")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score predicted labels against truth")
    p.add_argument("predicted", type=Path)
    p.add_argument("truth", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time segment_ground on a synthetic frame")
    p.add_argument("spec", type=Path, help="terrain spec JSON")
    p.add_argument("-n", "--repetitions", type=int, default=5)
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradient check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sizes", type=int, nargs="+", default=[4, 8, 12, 15])
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--report", type=Path, help="CSV report path (default stdout)")
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (GroundSegError, FileNotFoundError, OSError) as exc:
        print(f"gpground {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
