"""Simulation studies: significance level, detection probability, L vs L~.

Every simulation draws from its own seed derived from
``(spec.seed, cell, index)``, so reports do not depend on how the work
is split across processes.  Reports are flat CSV tables (one row per
parameter cell) with a JSON sidecar holding the full spec.
"""

import csv
import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np

from . import plotting
from ._parallel import ordered_map
from .detector import (
    correctly_detected,
    mft_test,
    sequential_pipeline,
)
from .filtered_derivative import variance_processes
from .limit_law import (
    Grid,
    LTildeParams,
    calibrate,
    covariance_curve,
    l_process,
    l_tilde_process,
    simulate_brownian,
    simulate_max_statistics,
    upper_quantile,
)
from .renewal_sim import (
    BOTH,
    VARIANCE,
    LifetimeLaw,
    RandomDesign,
    fig3_model,
    fig3_rate_only_model,
    sample_composite,
    sample_random_design,
    sample_renewal,
)

log = logging.getLogger(__name__)

EXPERIMENTS = (
    "sig-level-constant",
    "sig-level-random",
    "detection",
    "limit-comparison",
    "fig3",
    "ablation",
)
# camelCase names accepted as aliases
ALIASES = {
    "sigLevelConstantRate": "sig-level-constant",
    "sigLevelRandomRate": "sig-level-random",
    "detectionProbability": "detection",
    "limitComparison": "limit-comparison",
    "fig3Showcase": "fig3",
}
DEFAULT_WINDOWS = (150, 250, 500, 750, 1000, 1250)
CHUNK = 25  # simulations per work unit

# Parameter sets of the L vs L~ comparison: (name, mu1, mu2, sd1, sd2)
LIMIT_SETS = (("A", 0.1, 0.15, 0.1, 0.1), ("B", 0.1, 0.5, 0.5, 0.5))


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    means: tuple = (0.25,)
    sds: tuple = (0.125,)
    n_sims: int = 1000
    seed: int = 0
    scale: float = 1.0
    T: float = 2000.0
    window_multiples: tuple = DEFAULT_WINDOWS
    alpha: float = 0.05
    q_sims: int = 10000
    resolution: int = 200
    mean_factors: tuple = (1.0, 0.8, 1.2, 1.6)
    variance_factors: tuple = (1.0, 1.4, 1.6, 2.0)

    def __post_init__(self):
        object.__setattr__(self, "experiment", ALIASES.get(self.experiment, self.experiment))
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; valid names: {', '.join(EXPERIMENTS)}"
            )
        if self.sims < 100:
            raise ValueError(f"need at least 100 simulations per cell, got {self.sims}")
        if not self.means or not self.sds:
            raise ValueError("parameter grids must be nonempty")
        if not 0 <= self.alpha < 1:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")

    @property
    def sims(self):
        return int(round(self.n_sims * self.scale))

    def cells(self):
        return [(float(m), float(s)) for m in self.means for s in self.sds]

    def windows(self, mu):
        return [m * mu for m in self.window_multiples]


@dataclass
class ExperimentReport:
    name: str
    columns: list
    rows: list
    config: dict
    tables: dict = field(default_factory=dict)
    runtime: float = 0.0
    figure: object = field(default=None, repr=False)

    def write(self, outdir):
        """Write ``<name>.csv``, extra tables, ``<name>.json`` and ``<name>.svg``.

        Runtime is left out of the files so they stay byte-reproducible.
        """
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = [outdir / f"{self.name}.csv"]
        _write_csv(paths[0], self.columns, self.rows)
        for key, (cols, rows) in self.tables.items():
            p = outdir / f"{self.name}_{key}.csv"
            _write_csv(p, cols, rows)
            paths.append(p)
        side = outdir / f"{self.name}.json"
        side.write_text(json.dumps({"config": self.config, "columns": self.columns},
                                   indent=2, sort_keys=True) + "\n")
        paths.append(side)
        if self.figure is not None:
            fig_path = outdir / f"{self.name}.svg"
            self.figure(fig_path)
            paths.append(fig_path)
        return paths


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(columns)
        for r in rows:
            out.writerow([_fmt(r[c]) for c in columns])


def sim_seed(seed, *keys):
    """Integer seed for simulation ``keys`` under the experiment seed."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def binomial_se(p, n):
    return math.sqrt(p * (1.0 - p) / n) if n else float("nan")


def _chunks(n):
    return [(i, min(i + CHUNK, n)) for i in range(0, n, CHUNK)]


def _setup(spec, mu, workers, cache=None):
    H = spec.windows(mu)
    grid = Grid.for_windows(spec.T, H, spec.resolution)
    if spec.alpha == 0:
        return H, grid, float("inf")
    q = calibrate(H, grid, spec.alpha, spec.q_sims, spec.seed, cache=cache, workers=workers)
    return H, grid, q


def _q_value(q):
    return q.Q if hasattr(q, "Q") else q


# -- per-simulation workers (module level so they pickle) -------------------

def _constant_chunk(task, spec, cell, mu, sd, H, grid, q):
    law = LifetimeLaw(mu, sd)
    out = []
    for i in range(*task):
        series = sample_renewal(law, spec.T, sim_seed(spec.seed, cell, i))
        out.append(mft_test(variance_processes(series, H, grid), q).reject)
    return out


def _random_chunk(task, spec, cell, mu, sd, H, grid, q):
    design = RandomDesign("rate_only", mu, sd, 800.0, spec.mean_factors,
                          spec.variance_factors, margin=H[0])
    out = []
    for i in range(*task):
        series, truth, _ = sample_random_design(design, spec.T, sim_seed(spec.seed, cell, i))
        res = sequential_pipeline(series, H, H, grid, q, q, warn=False)
        out.append((res.variance.test.reject, res.rate.test.reject, len(truth)))
    return out


def _variance_ratio(model, j):
    a, b = model.laws[j].variance, model.laws[j + 1].variance
    return round(max(a, b) / min(a, b), 6)


def _detection_chunk(task, spec, cell, design, H, grid, q):
    out = []
    for i in range(*task):
        series, truth, model = sample_random_design(design, spec.T, sim_seed(spec.seed, cell, i))
        res = sequential_pipeline(series, H, H, grid, q, q, warn=False)
        idx = [j for j, c in enumerate(truth) if c.kind in (VARIANCE, BOTH)]
        hits = correctly_detected([truth[j].time for j in idx], res.variance.change_points)
        out.append([(_variance_ratio(model, j), bool(hit)) for j, hit in zip(idx, hits)])
    return out


def _fig3_chunk(task, spec, H, grid, q):
    model = fig3_model(spec.T)
    rate_true, var_true = (430.0, 1060.0), (630.0, 1490.0)
    out = []
    for i in range(*task):
        res = sequential_pipeline(sample_composite(model, sim_seed(spec.seed, 0, i)),
                                  H, H, grid, q, q, warn=False)
        rcp, vcp = res.rate.change_points, res.variance.change_points
        out.append({
            "n_rate": len(rcp),
            "n_var": len(vcp),
            "recall": [bool(x) for x in correctly_detected(rate_true, rcp)]
                      + [bool(x) for x in correctly_detected(var_true, vcp)],
            "rate_precise": all(any(abs(c.time - t) <= c.h for t in rate_true) for c in rcp),
            "var_precise": all(any(abs(c.time - t) <= c.h for t in var_true) for c in vcp),
        })
    return out


def _ablation_chunk(task, spec, H, grid, q):
    model = fig3_rate_only_model(spec.T)
    out = []
    for i in range(*task):
        series = sample_composite(model, sim_seed(spec.seed, 0, i))
        with_c = sequential_pipeline(series, H, H, grid, q, q, warn=False)
        without = sequential_pipeline(series, H, H, grid, q, q, correct_rate=False, warn=False)
        out.append((with_c.variance.test.reject, without.variance.test.reject))
    return out


def _run(func, n, workers):
    return [x for part in ordered_map(func, _chunks(n), workers) for x in part]


# -- experiments ---------------------------------------------------------------

def run_sig_level(spec, workers=1, cache=None):
    """Rejection frequency of the variance test under its null hypothesis.

    ``sig-level-constant`` uses renewal processes (global mean);
    ``sig-level-random`` adds random rate change points that are
    estimated by the rate stage before the variance test.
    """
    if spec.experiment not in ("sig-level-constant", "sig-level-random"):
        raise ValueError(f"run_sig_level cannot run {spec.experiment!r}")
    random_rate = spec.experiment == "sig-level-random"
    rows = []
    for cell, (mu, sd) in enumerate(spec.cells()):
        H, grid, q = _setup(spec, mu, workers, cache)
        worker = _random_chunk if random_rate else _constant_chunk
        func = partial(worker, spec=spec, cell=cell, mu=mu, sd=sd, H=H, grid=grid, q=q)
        res = _run(func, spec.sims, workers)
        rejects = [r[0] if random_rate else r for r in res]
        n = len(rejects)
        p = sum(rejects) / n
        row = {"mu": mu, "sd": sd, "Q": float(_q_value(q)), "n_sims": n,
               "rejections": int(sum(rejects)), "rate": p, "se": binomial_se(p, n)}
        if random_rate:
            row["rate_stage_rejections"] = int(sum(r[1] for r in res))
            row["mean_true_cps"] = float(np.mean([r[2] for r in res]))
        rows.append(row)
        log.info("%s mu=%g sd=%g: %.4f", spec.experiment, mu, sd, p)
    columns = list(rows[0])
    report = ExperimentReport(spec.experiment, columns, rows, asdict(spec))
    if len(rows) > 1:
        report.figure = partial(plotting.heatmap_figure, rows, "mu", "sd", "rate",
                                title=spec.experiment)
    return report


def run_detection(spec, workers=1, cache=None):
    """Correct detections of variance change points, constant vs changing rate.

    The homogeneous design changes only the variance (gaps U[0, 1200]);
    the inhomogeneous one changes rate, variance or both (gaps U[0, 800]).
    Rows with ``factor="all"`` pool all variance change points; further
    rows split them by the size of the variance jump.
    """
    rows = []
    for c, (mu, sd) in enumerate(spec.cells()):
        H, grid, q = _setup(spec, mu, workers, cache)
        designs = (
            ("homogeneous", RandomDesign("variance_only", mu, sd, 1200.0, spec.mean_factors,
                                         spec.variance_factors, margin=H[0])),
            ("inhomogeneous", RandomDesign("mixed", mu, sd, 800.0, spec.mean_factors,
                                           spec.variance_factors, margin=H[0])),
        )
        for d, (name, design) in enumerate(designs):
            func = partial(_detection_chunk, spec=spec, cell=2 * c + d, design=design,
                           H=H, grid=grid, q=q)
            pairs = [x for sim in _run(func, spec.sims, workers) for x in sim]
            groups = {"all": [hit for _, hit in pairs]}
            for ratio in sorted({r for r, _ in pairs}):
                groups[f"{ratio:g}"] = [hit for r, hit in pairs if r == ratio]
            for factor, hits in groups.items():
                n = len(hits)
                p = sum(hits) / n if n else 0.0
                rows.append({"mu": mu, "sd": sd, "design": name, "factor": factor,
                             "n_true": n, "n_detected": int(sum(hits)), "rate": p,
                             "se": binomial_se(p, n), "n_sims": spec.sims})
    columns = ["mu", "sd", "design", "factor", "n_sims", "n_true", "n_detected", "rate", "se"]
    report = ExperimentReport(spec.experiment, columns, rows, asdict(spec))
    report.figure = partial(plotting.detection_figure, rows)
    return report


def run_limit_comparison(spec, workers=1, cache=None, cov_window=100.0, cov_sims=None):
    """Coupled maxima of ``|L|`` and ``|L~|`` and covariance curves at ``c = T/2``."""
    c = spec.T / 2
    rows, cov_rows, panels = [], [], []
    for name, mu1, mu2, sd1, sd2 in LIMIT_SETS:
        params = LTildeParams.gamma(c, mu1, mu2, sd1, sd2)
        H = spec.windows(mu1)
        grid = Grid.for_windows(spec.T, H, spec.resolution)
        M, Mt = simulate_max_statistics(H, grid, spec.q_sims, spec.seed, workers, tilde=params)
        Q, Qt = upper_quantile(M, spec.alpha), upper_quantile(Mt, spec.alpha)
        rows.append({"set": name, "mu1": mu1, "mu2": mu2, "sd1": sd1, "sd2": sd2,
                     "Q": Q, "Q_tilde": Qt, "abs_diff": abs(Q - Qt),
                     "level_of_Q_under_L_tilde": float(np.mean(Mt <= Q)),
                     "n_sims": spec.q_sims})
        cgrid = Grid.regular(spec.T, 1.0)
        offsets = np.arange(-3 * cov_window, 3 * cov_window + 1, cov_window / 10)
        n_cov = cov_sims or spec.q_sims
        cov_L = covariance_curve(cov_window, cgrid, c, offsets, n_cov, spec.seed, None, workers)
        cov_T = covariance_curve(cov_window, cgrid, c, offsets, n_cov, spec.seed, params, workers)
        for v, a, b in zip(offsets, cov_L, cov_T):
            cov_rows.append({"set": name, "h": cov_window, "offset": float(v),
                             "cov_L": float(a), "cov_L_tilde": float(b)})
        W = simulate_brownian(cgrid, spec.seed, 0)
        panels.append({
            "name": f"set {name}", "t": cgrid.times[cgrid.window_slice(cov_window)],
            "L": l_process(W, cov_window, cgrid),
            "L_tilde": l_tilde_process(W, cov_window, cgrid, params),
            "Q": Q, "Q_tilde": Qt, "offsets": offsets, "cov_L": cov_L, "cov_L_tilde": cov_T,
        })
    columns = list(rows[0])
    report = ExperimentReport(spec.experiment, columns, rows, asdict(spec),
                              tables={"covariance": (list(cov_rows[0]), cov_rows)})
    report.figure = partial(plotting.limit_figure, panels)
    return report


def _fig3_windows(spec):
    # windows scale with the mean of the first segment
    return spec.windows(0.25)


def run_fig3(spec, workers=1, cache=None):
    """Repeated sequential detection on the two-rate/two-variance showcase model."""
    H = _fig3_windows(spec)
    grid = Grid.for_windows(spec.T, H, spec.resolution)
    q = calibrate(H, grid, spec.alpha, spec.q_sims, spec.seed, cache=cache, workers=workers)
    res = _run(partial(_fig3_chunk, spec=spec, H=H, grid=grid, q=q), spec.sims, workers)
    rows = [{"sim": i, "n_rate": r["n_rate"], "n_var": r["n_var"],
             "hit_430": r["recall"][0], "hit_1060": r["recall"][1],
             "hit_630": r["recall"][2], "hit_1490": r["recall"][3],
             "rate_precise": r["rate_precise"], "var_precise": r["var_precise"]}
            for i, r in enumerate(res)]
    report = ExperimentReport(spec.experiment, list(rows[0]), rows, asdict(spec))
    model = fig3_model(spec.T)
    example = sequential_pipeline(sample_composite(model, sim_seed(spec.seed, 0, 0)),
                                  H, H, grid, q, q, warn=False)
    truth = {
        "rate": [(a, b, 1.0 / law.mean) for a, b, law in model.segments()],
        "variance": [(a, b, law.variance) for a, b, law in model.segments()],
    }
    report.figure = partial(plotting.pipeline_figure, example, truth=truth)
    return report


def run_ablation(spec, workers=1, cache=None):
    """Variance-test rejections on a rate-only series, with and without rate correction."""
    H = _fig3_windows(spec)
    grid = Grid.for_windows(spec.T, H, spec.resolution)
    q = calibrate(H, grid, spec.alpha, spec.q_sims, spec.seed, cache=cache, workers=workers)
    res = _run(partial(_ablation_chunk, spec=spec, H=H, grid=grid, q=q), spec.sims, workers)
    n = len(res)
    rows = []
    for label, k in (("corrected", 0), ("uncorrected", 1)):
        p = sum(r[k] for r in res) / n
        rows.append({"variant": label, "n_sims": n, "rejections": int(sum(r[k] for r in res)),
                     "rate": p, "se": binomial_se(p, n)})
    return ExperimentReport(spec.experiment, list(rows[0]), rows, asdict(spec))


RUNNERS = {
    "sig-level-constant": run_sig_level,
    "sig-level-random": run_sig_level,
    "detection": run_detection,
    "limit-comparison": run_limit_comparison,
    "fig3": run_fig3,
    "ablation": run_ablation,
}


def run_experiment(spec, workers=1, cache=None):
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        report = RUNNERS[spec.experiment](spec, workers=workers, cache=cache)
    report.runtime = time.perf_counter() - start
    log.info("%s finished in %.1f s", spec.experiment, report.runtime)
    return report


def spec_from_dict(data):
    """Build a spec from JSON-like data (lists become tuples)."""
    fixed = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    return ExperimentSpec(**fixed)


__all__ = [
    "EXPERIMENTS", "ExperimentReport", "ExperimentSpec", "run_experiment", "run_sig_level",
    "run_detection", "run_limit_comparison", "run_fig3", "run_ablation", "spec_from_dict",
    "sim_seed", "binomial_se", "replace",
]
