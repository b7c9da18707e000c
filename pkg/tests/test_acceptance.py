"""End-to-end acceptance criteria; each test records one PASS/FAIL line."""
import json
import math
import os
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ACCEPTANCE_LINES
from gpground.cli import main
from gpground.cloud_io import Label, write_pcd
from gpground.gp import GroundModel, HeightKernelParams, LatentKernelParams, LatentModel, \
    height_posterior, ns_gram, ns_kernel
from gpground.grid import GridConfig, build_grid
from gpground.lines import LineParams
from gpground.opt import ScgOptions, gradcheck, scg
from gpground.pipeline import ClassifierThresholds, calibrate_td, evaluate, segment_ground, \
    train_segment
from gpground.synth import SUITES, generate, suite_spec

pytestmark = pytest.mark.slow

SUITE_TARGETS = {"flat": 0.97, "sloped": 0.94, "piecewise": 0.94, "bumpy": 0.92}
EVAL_SEEDS = range(5)
CALIBRATION_SEEDS = (100, 101)


def record(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
    assert ok, detail


def test_c1_kernel_reduction():
    worst = []

    @settings(max_examples=5, deadline=None, derandomize=True)
    @given(st.integers(0, 2**32 - 1))
    def check(seed):
        rng = np.random.default_rng(seed)
        ri, rj = rng.uniform(-100, 100, (2, 1000))
        L = np.exp(rng.uniform(math.log(0.05), math.log(60), 1000))
        se = np.exp(-((ri - rj) ** 2) / (2 * L * L))
        err = float(np.max(np.abs(ns_kernel(ri, rj, L, L, 1.0) - se)))
        worst.append(err)
        assert err < 1e-12

    t0 = time.perf_counter()
    check()
    elapsed = time.perf_counter() - t0
    record(1, "kernel reduction identity", max(worst) < 1e-12 and elapsed < 1.0,
           f"{len(worst)} draws of 1000 triples, max |diff| {max(worst):.2e} (< 1e-12), "
           f"{elapsed:.2f} s (< 1 s)")


def test_c2_gradient_consistency():
    t0 = time.perf_counter()
    rows = gradcheck(seed=2024, sizes=(4, 8, 12, 15), count=20, max_support=6)
    elapsed = time.perf_counter() - t0
    worst = max(r["relative_error"] for r in rows)
    cases = {r["case"] for r in rows}
    record(2, "analytic vs finite-difference gradient", worst < 1e-4 and elapsed < 30 and len(cases) == 20,
           f"{len(cases)} segments, max relative error {worst:.2e} (< 1e-4), {elapsed:.1f} s (< 30 s)")


def _dense(model, rq, Lq):
    sf, sn = model.height.sigma_f, model.height.sigma_n
    K = np.array([[ns_kernel(a, b, la, lb, sf) for b, lb in zip(model.r, model.L)]
                  for a, la in zip(model.r, model.L)])
    Ainv = np.linalg.inv(K + sn**2 * np.eye(len(model.r)))
    ks = np.array([[ns_kernel(q, b, lq, lb, sf) for b, lb in zip(model.r, model.L)]
                   for q, lq in zip(rq, Lq)])
    mean = ks @ Ainv @ model.z + model.z_offset
    var = sf**2 - np.einsum("ij,jk,ik->i", ks, Ainv, ks)
    return mean, var


def _random_latent(rng, r):
    k = int(rng.integers(1, min(len(r), 6) + 1))
    return LatentModel.fit(np.sort(rng.choice(r, k, replace=False)), rng.uniform(0, 3, k),
                           LatentKernelParams(rng.uniform(0.5, 2), rng.uniform(2, 20), 0.05))


def _random_model(rng, n, sn):
    r = np.sort(rng.uniform(0.5, 60, n))
    z = 0.2 * np.sin(r / 5) + rng.normal(0, 0.05, n)
    return GroundModel.fit(r, z, HeightKernelParams(rng.uniform(0.1, 1.0), sn), _random_latent(rng, r),
                           z_offset=float(np.median(z)))


def _prior_sample_model(rng, n, sn):
    """Model whose heights are a noise-free draw from its own GP prior."""
    r = np.sort(rng.uniform(0.5, 60, n))
    latent = _random_latent(rng, r)
    sf = rng.uniform(0.1, 1.0)
    L = np.clip(np.exp(latent.predict(r)), 0.5, 50.0)
    w, Q = np.linalg.eigh(ns_gram(r, r, L, L, sf))
    z = Q @ (np.sqrt(np.maximum(w, 0.0)) * rng.standard_normal(n))
    return GroundModel.fit(r, z, HeightKernelParams(sf, sn), latent, z_offset=0.0)


def test_c3_posterior_oracle():
    rng = np.random.default_rng(33)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 21))
        model = _random_model(rng, n, rng.uniform(0.01, 0.3))
        rq = rng.uniform(0, 65, int(rng.integers(1, 21)))
        Lq = model.length_scales(rq)
        post = height_posterior(model, rq, Lq)
        mean, var = _dense(model, rq, Lq)
        for a, b in ((post.mean, mean), (post.variance, var)):
            worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-12))))
    elapsed = time.perf_counter() - t0
    record(3, "posterior vs dense-inverse oracle", worst < 1e-8 and elapsed < 5,
           f"50 instances, max relative diff {worst:.2e} (< 1e-8), {elapsed:.2f} s (< 5 s)")


def test_c4_noiseless_interpolation():
    worst = []

    @settings(max_examples=300, deadline=None, derandomize=True)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 20))
    def check(seed, n):
        model = _prior_sample_model(np.random.default_rng(seed), n, 1e-6)
        post = height_posterior(model, model.r, model.L)
        err = float(np.max(np.abs(post.mean - (model.z + model.z_offset))))
        worst.append(err)
        assert err < 1e-4

    check()
    record(4, "noiseless interpolation", max(worst) < 1e-4,
           f"{len(worst)} models with prior-drawn heights, max |z_bar - z| {max(worst):.2e} m (< 1e-4 m)")


def _rosen(x):
    f = 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
    g = np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)])
    return f, g


def test_c5_scg_sanity():
    res = scg(_rosen, np.array([-1.2, 1.0]),
              ScgOptions(max_iterations=2000, gradient_tolerance=1e-9, relative_tolerance=0.0))
    traces = []
    for name in SUITES:
        cloud, _ = generate(suite_spec(name, 0))
        cfg = GridConfig()
        for seg in build_grid(cloud, cfg).segments:
            trace = train_segment(seg, cfg, LineParams(), ScgOptions())[2]
            if trace is not None:
                traces.append(np.asarray(trace))
    monotone = all(np.all(np.diff(t) <= 0) for t in traces)
    record(5, "SCG sanity", res.fun < 1e-6 and monotone,
           f"Rosenbrock f = {res.fun:.2e} (< 1e-6) after {res.iterations} iterations; "
           f"{len(traces)} pipeline traces non-increasing: {monotone}")


def test_c6_segmentation_quality():
    t0 = time.perf_counter()
    calibration = []
    for name in SUITES:
        for seed in CALIBRATION_SEEDS:
            cloud, truth = generate(suite_spec(name, seed))
            calibration.append((segment_ground(cloud), truth))
    td, _ = calibrate_td(calibration)
    th = ClassifierThresholds(T_d=td)
    details, ok = [], True
    for name, target in SUITE_TARGETS.items():
        rates, recalls = [], []
        for seed in EVAL_SEEDS:
            cloud, truth = generate(suite_spec(name, seed))
            out = segment_ground(cloud, thresholds=th)
            rates.append(evaluate(out, truth).success_rate)
            recalls.append(np.mean(out.label[truth == Label.OBSTACLE] == Label.OBSTACLE))
        mean = float(np.mean(rates))
        ok &= mean >= target
        details.append(f"{name} {mean:.4f} (min {min(rates):.4f}, >= {target}; "
                       f"obstacle recall {np.mean(recalls):.3f})")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    record(6, "segmentation success rate", ok,
           f"T_d = {td:g} calibrated on held-out seeds; " + "; ".join(details)
           + f"; {elapsed:.0f} s (< 300 s)")


def _bench(spec_path, jobs, capsys):
    capsys.readouterr()
    assert main(["bench", str(spec_path), "-n", "5", "--jobs", str(jobs)]) == 0
    return json.loads(capsys.readouterr().out)


def test_c7_runtime(tmp_path, capsys):
    spec = suite_spec("sloped", 0)
    spec_path = tmp_path / "bench.json"
    spec_path.write_text(json.dumps(spec.to_dict()))
    single = _bench(spec_path, 1, capsys)
    jobs = max(4, os.cpu_count() or 1)
    parallel = _bench(spec_path, jobs, capsys)
    stages = single["stages_mean_ms"]
    ok = (single["points"] >= 70000 and single["mean_ms"] < 250 and parallel["mean_ms"] < 100
          and set(stages) == {"grid", "lines", "optimize", "predict"})
    breakdown = ", ".join(f"{k} {v:.0f}" for k, v in stages.items())
    record(7, "run-time", ok,
           f"{single['points']} points: single worker {single['mean_ms']:.0f} ms (< 250 ms), "
           f"{jobs} threads on {os.cpu_count()} CPU(s) {parallel['mean_ms']:.0f} ms (< 100 ms); "
           f"stages ms: {breakdown}")


def test_c8_determinism(tmp_path, capsys):
    cloud, _ = generate(suite_spec("bumpy", 3, rings=32, points_per_ring=500))
    src = tmp_path / "frame.pcd"
    write_pcd(src, cloud)
    outputs = []
    for jobs in (1, 1, 3, 3):
        out = tmp_path / f"out{len(outputs)}.csv"
        assert main(["segment", str(src), "-o", str(out), "--jobs", str(jobs), "--seed", "5",
                     "--summary", str(tmp_path / "s.json")]) == 0
        outputs.append(out.read_bytes())
    same = all(o == outputs[0] for o in outputs)
    record(8, "byte-identical output", same,
           f"4 runs at jobs 1, 1, 3, 3: identical = {same} ({len(outputs[0])} bytes)")


def test_c9_threshold_monotonicity():
    cloud, _ = generate(suite_spec("piecewise", 2, rings=32, points_per_ring=500))
    tds = [1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0, 40.0]
    masks = [segment_ground(cloud, thresholds=ClassifierThresholds(T_d=t)).label == Label.GROUND
             for t in tds]
    nested = all(np.all(b[a]) for a, b in zip(masks, masks[1:]))
    counts = [int(m.sum()) for m in masks]
    record(9, "T_d monotonicity", nested,
           f"Ground sets nested over T_d {tds}: {nested}; sizes {counts}")
