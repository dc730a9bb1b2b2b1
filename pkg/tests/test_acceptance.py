"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances are the stated ones; nothing here is loosened to make a
criterion pass.  The lines are repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from multifilter.cli import main as cli_main
from multifilter.experiments import ExperimentSpec, run_experiment, run_limit_comparison
from multifilter.filtered_derivative import nu_hat
from multifilter.limit_law import Grid, LTildeParams, l_process, l_tilde_process, scale_sq, simulate_brownian
from multifilter._rng import substream

H_MULT = (150, 250, 500, 750, 1000, 1250)
LIMIT_SETS = {"A": (0.1, 0.15, 0.1, 0.1), "B": (0.1, 0.5, 0.5, 0.5)}


@pytest.fixture(scope="module")
def cache(tmp_path_factory):
    return tmp_path_factory.mktemp("calibration") / "cache.json"


@pytest.fixture(scope="module")
def constant_cell(cache):
    start = time.perf_counter()
    rep = run_experiment(ExperimentSpec("sig-level-constant", n_sims=1000, seed=0), cache=cache)
    return rep.rows[0], time.perf_counter() - start


def test_c01_limit_process_moments(record):
    start = time.perf_counter()
    H = [m * 0.25 for m in H_MULT]
    grid = Grid.for_windows(2000.0, H, 100)
    rng = np.random.default_rng(2024)
    pairs = []
    for _ in range(10):
        h = float(rng.choice(H))
        k = grid.index(h)
        i = int(rng.integers(k, grid.n - k + 1))
        pairs.append((h, k, i))
    # covariance partners at lags of 2h, 2.5h and 4h where they fit
    lags = []
    for h, k, i in pairs:
        for f in (2.0, 2.5, 4.0):
            j = i + int(round(f * k))
            if j <= grid.n - k:
                lags.append((h, k, i, j))
    n_paths = 10_000
    vals = np.empty((n_paths, len(pairs)))
    cov_vals = np.empty((n_paths, len(lags), 2))
    for p in range(n_paths):
        W = simulate_brownian(grid, 7, p)
        for c, (h, k, i) in enumerate(pairs):
            vals[p, c] = (W[i + k] - 2 * W[i] + W[i - k]) / math.sqrt(2 * h)
        for c, (h, k, i, j) in enumerate(lags):
            cov_vals[p, c, 0] = (W[i + k] - 2 * W[i] + W[i - k]) / math.sqrt(2 * h)
            cov_vals[p, c, 1] = (W[j + k] - 2 * W[j] + W[j - k]) / math.sqrt(2 * h)
    means = vals.mean(axis=0)
    variances = vals.var(axis=0, ddof=1)
    a = cov_vals[:, :, 0] - cov_vals[:, :, 0].mean(axis=0)
    b = cov_vals[:, :, 1] - cov_vals[:, :, 1].mean(axis=0)
    covs = (a * b).sum(axis=0) / (n_paths - 1)
    runtime = time.perf_counter() - start
    ok = (np.all(np.abs(means) <= 0.03) and np.all((variances >= 0.95) & (variances <= 1.05))
          and np.all(np.abs(covs) <= 0.03) and runtime < 120)
    record(1, "limit-process moments", ok,
           f"max|mean|={np.abs(means).max():.4f}, var in [{variances.min():.4f}, {variances.max():.4f}], "
           f"max|cov lag>=2h|={np.abs(covs).max():.4f} ({len(lags)} lags), delta={grid.delta:.4f}, "
           f"{runtime:.0f}s")
    assert ok


def test_c02_coupling_identity(record):
    grid = Grid.regular(2000.0, 1.0)
    worst = 0.0
    for name, (m1, m2, s1, s2) in LIMIT_SETS.items():
        p = LTildeParams.gamma(1000.0, m1, m2, s1, s2)
        W = np.stack([simulate_brownian(grid, 11, i) for i in range(20)])
        for h in (15.0, 50.0, 100.0, 125.0):
            L, Lt = l_process(W, h, grid), l_tilde_process(W, h, grid, p)
            t = grid.times[grid.window_slice(h)]
            far = np.abs(t - p.c) > h
            rel = np.abs(Lt[:, far] - L[:, far]) / np.maximum(np.abs(L[:, far]), 1e-300)
            worst = max(worst, float(rel.max()))
    ok = worst <= 1e-12
    record(2, "coupling identity L~ = L for |t-c| > h", ok, f"max relative difference {worst:.2e}")
    assert ok


def test_c03_interpolation_endpoints(record):
    worst = 0.0
    for m1, m2, s1, s2 in LIMIT_SETS.values():
        p = LTildeParams.gamma(1000.0, m1, m2, s1, s2)
        for h in (15.0, 100.0, 125.0):
            got = scale_sq(np.array([p.c - h, p.c + h]), h, p)
            want = np.array([2 * p.nu1_sq / (h / p.mu1), 2 * p.nu2_sq / (h / p.mu2)])
            worst = max(worst, float(np.max(np.abs(got - want) / want)))
    ok = worst <= 1e-12
    record(3, "scaling at t = c -/+ h equals segment values", ok, f"max relative error {worst:.2e}")
    assert ok


def test_c04_quantile_closeness(record):
    start = time.perf_counter()
    rep = run_limit_comparison(ExperimentSpec("limit-comparison", q_sims=10_000), cov_sims=2000)
    runtime = time.perf_counter() - start
    row = next(r for r in rep.rows if r["set"] == "A")
    ok = row["abs_diff"] < 0.05 and runtime < 300
    record(4, "|Q - Q~| for parameter set A", ok,
           f"Q={row['Q']:.4f}, Q~={row['Q_tilde']:.4f}, |diff|={row['abs_diff']:.4f}; "
           f"P(max|L~| <= Q)={row['level_of_Q_under_L_tilde']:.4f}; {runtime:.0f}s")
    assert ok


def test_c05_sig_level_constant_rate(record, constant_cell):
    row, runtime = constant_cell
    ok = 0.03 <= row["rate"] <= 0.08 and runtime < 900
    record(5, "significance level, constant rate", ok,
           f"rejection rate {row['rate']:.3f} +/- {row['se']:.3f} "
           f"({row['rejections']}/{row['n_sims']}, Q={row['Q']:.3f}), band [0.03, 0.08]; {runtime:.0f}s")
    assert ok


def test_c06_sig_level_random_rate(record, constant_cell, cache):
    rep = run_experiment(ExperimentSpec("sig-level-random", n_sims=500, seed=0), cache=cache)
    row = rep.rows[0]
    const, const_se = constant_cell[0]["rate"], constant_cell[0]["se"]
    # the ordering carries no tolerance of its own; use the 3-SE slack on the difference
    slack = 3 * math.hypot(row["se"], const_se)
    ok = row["rate"] <= 0.12 and row["rate"] >= const - slack
    record(6, "significance level, random rate change points", ok,
           f"stage-2 rejection rate {row['rate']:.3f} +/- {row['se']:.3f} (<= 0.12); "
           f"constant-rate cell {const:.3f} +/- {const_se:.3f}; ordering with 3-SE slack "
           f"({slack:.3f}) {'holds' if row['rate'] >= const - slack else 'fails'}, "
           f"strict ordering {'holds' if row['rate'] >= const else 'fails'}")
    assert ok


def test_c07_ablation(record, cache):
    rep = run_experiment(ExperimentSpec("ablation", n_sims=500, seed=0), cache=cache)
    rates = {r["variant"]: r["rate"] for r in rep.rows}
    gap = rates["uncorrected"] - rates["corrected"]
    ok = gap >= 0.10
    record(7, "rate correction ablation", ok,
           f"uncorrected {rates['uncorrected']:.3f} vs corrected {rates['corrected']:.3f}, "
           f"gap {gap:.3f} (>= 0.10)")
    assert ok


def test_c08_detection_pairing(record, cache):
    cells = [(0.25, 0.125), (0.25, 0.25), (0.5, 0.25)]
    diffs = []
    parts = []
    for mu, sd in cells:
        rep = run_experiment(ExperimentSpec("detection", means=(mu,), sds=(sd,), n_sims=1000, seed=0),
                             cache=cache)
        by = {r["design"]: r for r in rep.rows if r["factor"] == "all"}
        d = abs(by["homogeneous"]["rate"] - by["inhomogeneous"]["rate"])
        diffs.append(d)
        parts.append(f"({mu:g},{sd:g}): {by['homogeneous']['rate']:.3f}/{by['inhomogeneous']['rate']:.3f}")
    ok = max(diffs) <= 0.10
    record(8, "detection pairing homogeneous/inhomogeneous", ok,
           "; ".join(parts) + f"; max|diff|={max(diffs):.3f} (<= 0.10)")
    assert ok


def test_c09_fig3_showcase(record, cache):
    rep = run_experiment(ExperimentSpec("fig3", n_sims=200, seed=0), cache=cache)
    rows = rep.rows
    med_rate = float(np.median([r["n_rate"] for r in rows]))
    med_var = float(np.median([r["n_var"] for r in rows]))
    precise = np.mean([r["rate_precise"] and r["var_precise"] for r in rows])
    recall = [np.mean([r[k] for r in rows]) for k in ("hit_430", "hit_1060", "hit_630", "hit_1490")]
    ok = med_rate == 2 and med_var == 2 and precise > 0.5
    record(9, "two-stage showcase", ok,
           f"median cps rate={med_rate:g}, variance={med_var:g}; all detections within their window "
           f"of a truth in {precise:.3f} of sims; recall 430/1060/630/1490 = "
           + "/".join(f"{x:.2f}" for x in recall))
    assert ok


def test_c10_nu_hat_oracle(record):
    # (shape k0, scale theta); nu^2 = 2 k0 (k0 + 3) theta^4
    params = [(4.0, 1 / 16), (0.35**2 / 0.0216, 0.0216 / 0.35), (9.0, 0.3 / 9)]
    errs = []
    for j, (k0, th) in enumerate(params):
        xi = substream(10, j).gamma(k0, th, 100_000)
        target = 2 * k0 * (k0 + 3) * th**4
        errs.append(abs(nu_hat(xi, xi.mean()) / target - 1))
    ok = max(errs) <= 0.05
    record(10, "nu-hat vs closed form", ok, "relative errors " + ", ".join(f"{e:.4f}" for e in errs))
    assert ok


def test_c11_determinism(record, tmp_path):
    events = tmp_path / "fig3.txt"
    assert cli_main(["simulate", "--preset", "fig3", "--seed", "5", "-o", str(events)]) == 0
    outputs = {}
    for w in (1, 4, 8):
        d = tmp_path / f"w{w}"
        assert cli_main(["detect", "-i", str(events), "--rate-windows", "37.5,62.5,125,187.5,250,312.5",
                         "--n-sims", "2000", "--workers", str(w), "-o", str(d / "detect")]) == 0
        assert cli_main(["experiment", "sig-level-random", "--n-sims", "100", "--q-sims", "1000",
                         "--workers", str(w), "-o", str(d / "exp")]) == 0
        outputs[w] = {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}
    same = outputs[1] == outputs[4] == outputs[8]
    record(11, "byte-identical outputs for 1/4/8 workers", same,
           f"{len(outputs[1])} files compared ({', '.join(str(p) for p in outputs[1])})")
    assert same
