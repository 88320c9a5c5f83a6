"""End-to-end acceptance criteria, one test per criterion.

Each test records its outcome before asserting, and the conftest hook prints
one PASS/FAIL line per criterion at the end of the run.
"""

import json
import math
import time
import timeit
from dataclasses import replace

import numpy as np
import pytest

from afcmem import cli
from afcmem import config as cfg
from afcmem.core import SpectralGrid
from afcmem.echo import gaussian_probe, propagate, report
from afcmem.evo import GAConfig, SurrogateFitness, run_ga
from afcmem.metrics import eq1_efficiency, extract_metrics, gaussian_comb, optimal_depth, trough_background
from afcmem.multipass import pass_scan
from afcmem.photon import CountingConfig, simulate_counts
from afcmem.simulator import MemorySimulator, baseline_sequence

from conftest import ACCEPTANCE
from oracles import golden_max

WIDE = SpectralGrid(span_mhz=400.0, n_bins=2**15)
SUBCOMMANDS = ("baseline", "comb-dump", "pass-scan", "ts-scan", "photon-stats")


def record(n, title, ok, detail):
    ACCEPTANCE[n] = (bool(ok), title, detail)
    assert ok, detail


def cli_run(out, *argv):
    return cli.main([*argv, "--out", str(out)])


def artifact_bytes(out, name):
    return (out / f"{name}.csv").read_bytes() + (out / f"{name}.json").read_bytes()


@pytest.fixture(scope="module")
def optimize_runs(tmp_path_factory):
    """Default optimisation run twice: serial and with two workers."""
    root = tmp_path_factory.mktemp("optimize")
    timings = {}
    for label, jobs in (("serial", 1), ("parallel", 2)):
        start = time.perf_counter()
        code = cli_run(root / label, "optimize", "--set", f"ga.n_jobs={jobs}")
        timings[label] = (code, time.perf_counter() - start)
    return root, timings


def test_criterion_01_eq1_point():
    eta = eq1_efficiency(5.0, 3.68, 1.5)
    per_call = min(timeit.repeat(lambda: eq1_efficiency(5.0, 3.68, 1.5), number=100, repeat=5)) / 100
    ok = abs(eta - 0.081) <= 0.001 and per_call < 1e-3
    record(1, "closed-form point check", ok, f"eta={eta:.5f} (target 0.081 +- 0.001), {per_call * 1e6:.1f} us/call")


def test_criterion_02_forward_ceiling():
    start = time.perf_counter()
    F = 100.0
    d_star = golden_max(lambda d: eq1_efficiency(d, F, 0.0), 0.0, 10 * F)
    ceiling = eq1_efficiency(d_star, F, 0.0)
    rng = np.random.default_rng(2)
    worst = 0.0
    for f in np.concatenate([[1.5, 2.0, 3.0, 8.0], rng.uniform(1.5, 8.0, 50)]):
        numeric = golden_max(lambda d: eq1_efficiency(d, f, 0.0), 0.0, 10 * f, tol=1e-12)
        worst = max(worst, abs(numeric - 2 * f), abs(optimal_depth(f) - 2 * f))
    elapsed = time.perf_counter() - start
    ok = abs(ceiling - 0.5413) <= 0.0005 and worst <= 1e-6 and elapsed < 1.0
    record(2, "forward-retrieval ceiling", ok,
           f"max eta at F=100 is {ceiling:.5f}, worst |argmax - 2F| = {worst:.2e}, {elapsed:.2f} s")


def test_criterion_03_simulator_vs_formula():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    probe = gaussian_probe(WIDE, 50.0)
    rel = []
    for _ in range(100):
        F, d, d0 = rng.uniform(2, 6), rng.uniform(0.5, 8), rng.uniform(0, 2)
        spec = gaussian_comb(WIDE, 5.0, F, d, d0)  # periodic: 80 teeth
        measured = report(probe, propagate(probe, spec), 5.0).efficiency
        rel.append(abs(measured / eq1_efficiency(d, F, d0) - 1))
    elapsed = time.perf_counter() - start
    inside = int(np.sum(np.asarray(rel) <= 0.15))
    ok = inside >= 95 and elapsed < 120
    record(3, "simulator vs closed form", ok,
           f"{inside}/100 within 15% (need 95), median deviation {np.median(rel):.1%}, {elapsed:.1f} s")


def test_criterion_04_echo_timing():
    start = time.perf_counter()
    grid = SpectralGrid()
    probe = gaussian_probe(grid, 50.0)
    rep = report(probe, propagate(probe, gaussian_comb(grid, 5.0, 4.0, 4.0, 0.2)), 5.0)
    elapsed = time.perf_counter() - start
    ok = abs(rep.echo_time_ns - 200.0) <= grid.sample_period_ns and elapsed < 1.0
    record(4, "echo timing", ok,
           f"echo at {rep.echo_time_ns:.2f} ns (200 +- {grid.sample_period_ns:.2f}), {elapsed:.2f} s")


def test_criterion_05_metrics_round_trip():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    grid = SpectralGrid()
    worst, failures = 0.0, 0
    for _ in range(100):
        F, d, d0 = rng.uniform(2, 6), rng.uniform(0.5, 8), rng.uniform(0.1, 2)
        m = extract_metrics(gaussian_comb(grid, 5.0, F, d, d0), 5.0, 40.0)
        err = max(abs(m.finesse_F / F - 1), abs(m.depth_d / d - 1), abs(m.background_d0 / d0 - 1))
        worst = max(worst, err)
        failures += err > 0.03
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 60
    record(5, "metrics round trip", ok, f"{100 - failures}/100 within 3%, worst {worst:.2%}, {elapsed:.1f} s")


def test_criterion_06_ga_on_surrogate():
    start = time.perf_counter()
    surrogate = SurrogateFitness()
    target = surrogate.optimum()
    hits = 0
    for seed in range(20):
        config = GAConfig(master_seed=seed)
        res = run_ga(config, surrogate)
        hits += surrogate.exact_fitness(res.best_genome, config) >= 0.98 * target
    elapsed = time.perf_counter() - start
    ok = hits >= 18 and elapsed < 60
    record(6, "GA on surrogate", ok, f"{hits}/20 seeds within 2% of optimum {target:.4f}, {elapsed:.1f} s")


def test_criterion_07_ga_on_simulator(optimize_runs):
    root, timings = optimize_runs
    code, elapsed = timings["serial"]
    assert code == 0
    summary = json.loads((root / "serial" / "optimize.json").read_text())["results"]
    run = summary["runs"]["5"]
    ratio = run["best_efficiency"] / summary["baseline_efficiency"]

    scn = cfg.load_config()
    sim = cfg.build_simulator(scn)
    best = cfg.build_ga(scn, 5)
    g = run["best_genome"]
    seq = baseline_sequence(pulses=tuple(map(tuple, g["pulses"])), loop_duration_us=g["loop_duration_us"],
                            loop_count=g["loop_count"], pulse_separation_ns=best.pulse_separation_ns,
                            wait_ms=best.wait_ms)
    window = scn.comb.window_mhz
    d0_ga = trough_background(sim.spectrum(seq), 5.0, window)
    d0_base = trough_background(sim.spectrum(baseline_sequence()), 5.0, window)
    ok = ratio >= 1.5 and d0_ga < d0_base and elapsed < 1800
    record(7, "GA on simulator", ok,
           f"best/baseline = {run['best_efficiency']:.4f}/{summary['baseline_efficiency']:.4f} = {ratio:.2f}x "
           f"(need 1.5x); trough d0 {d0_ga:.3f} vs {d0_base:.3f}; {elapsed:.0f} s")


def test_criterion_08_multipass_optimum():
    start = time.perf_counter()
    sim = MemorySimulator()
    rows, best = pass_scan(sim, baseline_sequence(), range(1, 9), sim.overlap)
    single = rows[0][1]
    elapsed = time.perf_counter() - start
    ok = best == 4 and 0.008 <= single <= 0.014 and elapsed < 600
    record(8, "multi-pass optimum", ok, f"argmax m = {best}, single-pass efficiency {single:.2%}, {elapsed:.1f} s")


def test_criterion_09_shot_noise_slope():
    start = time.perf_counter()
    config = CountingConfig(seed=cfg.derive_seed(cfg.load_config().master_seed, "photon-stats"))
    rep = simulate_counts(config)
    means = [s.echo.mean for s in rep.settings]
    slope = rep.echo_fit.slope
    elapsed = time.perf_counter() - start
    ok = abs(slope - 1.0) <= 0.05 and config.n_events == 10_000 and elapsed < 10
    record(9, "shot-noise slope", ok,
           f"slope {slope:.3f} (95% CI {rep.echo_fit.ci_low:.3f}..{rep.echo_fit.ci_high:.3f}) "
           f"over echo means {means[0]:.3f}..{means[-1]:.3f}, {elapsed:.1f} s")


def test_criterion_10_storage_time_scan():
    start = time.perf_counter()
    scn = cfg.load_config()
    sim = cfg.build_simulator(scn)
    rows, tau = sim.storage_time_scan(cfg.build_sequence(scn), scn.ts_scan.storage_times_ns)
    elapsed = time.perf_counter() - start
    ok = math.isfinite(tau) and 194 / 2 <= tau <= 194 * 2 and elapsed < 300
    record(10, "storage-time scan", ok,
           f"tau = {tau:.0f} ns over t_s {rows[0][0]:.0f}..{rows[-1][0]:.0f} ns (band 97..388), {elapsed:.1f} s")


def test_criterion_11_determinism(tmp_path, optimize_runs):
    mismatched = []
    for name in SUBCOMMANDS:
        a, b = tmp_path / f"{name}-a", tmp_path / f"{name}-b"
        assert cli_run(a, name, "--seed", "11") == 0 and cli_run(b, name, "--seed", "11") == 0
        if artifact_bytes(a, name) != artifact_bytes(b, name):
            mismatched.append(name)
    a, b = tmp_path / "eq1-a", tmp_path / "eq1-b"
    for out in (a, b):
        assert cli_run(out, "eq1", "--d", "5", "--F", "3.68", "--d0", "1.5") == 0
    if artifact_bytes(a, "eq1") != artifact_bytes(b, "eq1"):
        mismatched.append("eq1")
    root, timings = optimize_runs
    assert timings["parallel"][0] == 0
    if artifact_bytes(root / "serial", "optimize") != artifact_bytes(root / "parallel", "optimize"):
        mismatched.append("optimize (serial vs parallel)")
    ok = not mismatched
    record(11, "determinism", ok,
           "all subcommands byte-identical on rerun, optimize identical with 1 and 2 workers"
           if ok else f"differ: {', '.join(mismatched)}")


def test_surrogate_ga_without_noise_is_exact():
    # sanity companion to criterion 6: the noiseless GA lands on the analytic optimum
    surrogate = SurrogateFitness()
    res = run_ga(replace(GAConfig(), fitness_noise_sigma=0.0), surrogate)
    assert res.best_fitness >= 0.98 * surrogate.optimum()
