"""Multiple filter test and multiple filter algorithm.

The test rejects when the largest ``|G|`` over all windows exceeds the
threshold ``Q``.  On rejection the algorithm extracts change points:
each window repeatedly takes its highest remaining peak above ``Q`` and
blanks the open ``h``-neighbourhood around it; windows are then merged
from the smallest upwards, keeping a candidate only if no accepted
change point lies inside its own ``h``-neighbourhood.
"""

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .filtered_derivative import (
    SegmentMeans,
    _snap,
    assign_segments,
    rate_processes,
    variance_processes,
)

log = logging.getLogger(__name__)

MIN_WINDOW_EVENTS = 150


@dataclass(frozen=True)
class WindowMax:
    h: float
    value: float
    t: float


@dataclass(frozen=True)
class TestResult:
    M: float
    Q: float
    alpha: float
    reject: bool
    per_window: tuple


@dataclass(frozen=True)
class ChangePoint:
    time: float
    h: float
    value: float
    kind: str


@dataclass(frozen=True)
class StepProfile:
    """Piecewise constant estimate; ``values[j]`` is None when unreliable."""

    breakpoints: tuple
    values: tuple
    kind: str

    def segments(self, T):
        b = (0.0,) + tuple(self.breakpoints) + (float(T),)
        return [(b[j], b[j + 1], v) for j, v in enumerate(self.values)]

    def __call__(self, t):
        j = np.searchsorted(np.asarray(self.breakpoints), t, side="left")
        vals = np.array([np.nan if v is None else v for v in self.values])
        return vals[j]


@dataclass
class StageResult:
    test: TestResult
    change_points: list
    profile: StepProfile
    processes: list = field(repr=False, default_factory=list)


@dataclass
class PipelineResult:
    rate: StageResult
    variance: StageResult
    config: dict

    def to_dict(self):
        def stage(s, threshold):
            return {
                "M": s.test.M,
                "Q": s.test.Q,
                "reject": s.test.reject,
                "fingerprint": threshold.get("fingerprint"),
                "per_window": [asdict(w) for w in s.test.per_window],
                "cps": [asdict(c) for c in s.change_points],
                "profile": [
                    {"start": a, "end": b, "value": v}
                    for a, b, v in s.profile.segments(self.config["T"])
                ],
            }

        cal = self.config.get("calibration", {})
        var_cal = cal.get("variance", {})
        return {
            "config": {k: v for k, v in self.config.items() if k != "calibration"},
            "calibration": {
                "Q": var_cal.get("Q"),
                "alpha": var_cal.get("alpha"),
                "fingerprint": var_cal.get("fingerprint"),
            },
            "rate": stage(self.rate, cal.get("rate", {})),
            "variance": stage(self.variance, var_cal),
        }


def _threshold_value(threshold):
    return (threshold.Q, threshold.alpha) if hasattr(threshold, "Q") else (float(threshold), float("nan"))


def mft_test(processes, threshold):
    """Compare the global maximum of ``|G|`` with the threshold."""
    if not processes:
        raise ValueError("need at least one window process")
    steps = {round(float(p.t[1] - p.t[0]), 12) for p in processes if p.t.size > 1}
    horizons = {round(float(p.t[-1] + p.h), 9) for p in processes}
    if len(steps) > 1 or len(horizons) > 1:
        raise ValueError("window processes do not share one grid")
    if hasattr(threshold, "delta") and steps:
        if abs(steps.pop() - threshold.delta) > 1e-9 * threshold.delta or horizons.pop() != round(threshold.T, 9):
            raise ValueError("threshold was calibrated on a different grid")
    Q, alpha = _threshold_value(threshold)
    per_window = tuple(WindowMax(float(p.h), *p.max_abs()) for p in processes)
    M = max(w.value for w in per_window)
    return TestResult(M, Q, alpha, bool(M > Q), per_window)


def detect_single_window(process, Q):
    """Successive peaks of ``|G|`` above ``Q`` with ``h``-neighbourhoods blanked."""
    a = np.abs(process.G).astype(float)
    t = process.t
    h = process.h
    alive = a > Q
    found = []
    while alive.any():
        masked = np.where(alive, a, -np.inf)
        i = int(np.argmax(masked))
        found.append((float(t[i]), float(a[i])))
        alive &= ~((t > t[i] - h) & (t < t[i] + h))
    return found


def merge_windows(candidates, kind="rate"):
    """Merge per-window candidates, smallest window first.

    ``candidates`` maps ``h`` to the ordered output of
    :func:`detect_single_window`.
    """
    accepted = []
    for h in sorted(candidates):
        for time, value in candidates[h]:
            if all(not (time - h < c.time < time + h) for c in accepted):
                accepted.append(ChangePoint(time, float(h), value, kind))
    return sorted(accepted, key=lambda c: c.time)


def mfa(processes, Q, kind):
    return merge_windows({p.h: detect_single_window(p, Q) for p in processes}, kind)


def estimate_profile(series, change_points, kind, means=None):
    """Step function of the rate (``1/mean``) or of the life time variance.

    Only life times lying fully inside a segment are used.  For the
    variance, deviations are taken from ``means`` (a :class:`SegmentMeans`)
    when given, otherwise from the mean of the segment itself.
    """
    cps = np.sort(np.asarray([getattr(c, "time", c) for c in change_points], dtype=float))
    seg, valid = assign_segments(series, cps)
    xi = series.lifetimes
    if kind == "variance" and means is not None:
        mseg, mvalid = assign_segments(series, means.change_points)
        valid = valid & mvalid
        centre = np.where(mvalid, np.asarray(means.means)[mseg], 0.0)
    else:
        centre = None
    values = []
    for j in range(cps.size + 1):
        sel = valid & (seg == j)
        if sel.sum() < 2:
            values.append(None)
            continue
        x = xi[sel]
        if kind == "rate":
            values.append(float(x.size / x.sum()))
        elif kind == "variance":
            c = centre[sel] if centre is not None else x.mean()
            values.append(float(np.mean(_snap(x - c, c) ** 2)))
        else:
            raise ValueError(f"unknown profile kind {kind!r}")
    return StepProfile(tuple(cps.tolist()), tuple(values), kind)


def change_strength(var1, var2):
    """``|var1 - var2|`` relative to their mean; None when both are zero."""
    if var1 < 0 or var2 < 0:
        raise ValueError("variances must be non-negative")
    total = var1 + var2
    if total == 0:
        return None
    return abs(var1 - var2) / (0.5 * total)


def check_min_window(series, windows, what):
    """Warn when the smallest window is expected to hold too few events."""
    expected = len(series) * min(windows) / series.T
    if expected < MIN_WINDOW_EVENTS:
        warnings.warn(
            f"smallest {what} window {min(windows)} holds about {expected:.0f} events; "
            f"at least {MIN_WINDOW_EVENTS} are advisable",
            stacklevel=3,
        )
    return expected


def run_stage(processes, threshold, kind):
    test = mft_test(processes, threshold)
    cps = mfa(processes, test.Q, kind) if test.reject else []
    return test, cps


def sequential_pipeline(series, rate_windows, var_windows, grid, q_rate, q_var,
                        correct_rate=True, warn=True):
    """Rate change points first, then variance change points given them.

    With ``correct_rate=False`` the variance stage ignores the rate change
    points and uses the global mean life time.
    """
    if warn:
        check_min_window(series, rate_windows, "rate")
        check_min_window(series, var_windows, "variance")
    rate_proc = rate_processes(series, rate_windows, grid)
    rate_test, rate_cps = run_stage(rate_proc, q_rate, "rate")
    cp_times = [c.time for c in rate_cps] if correct_rate else []
    means = SegmentMeans.estimate(series, cp_times)
    var_proc = variance_processes(series, var_windows, grid, means)
    var_test, var_cps = run_stage(var_proc, q_var, "variance")
    log.debug("rate M=%.3f (%d cps), variance M=%.3f (%d cps)",
              rate_test.M, len(rate_cps), var_test.M, len(var_cps))
    config = {
        "T": series.T,
        "n_events": len(series),
        "rate_windows": [float(h) for h in rate_windows],
        "var_windows": [float(h) for h in var_windows],
        "delta": grid.delta,
        "correct_rate": bool(correct_rate),
        "calibration": {
            name: ({"Q": q.Q, "alpha": q.alpha, "fingerprint": q.fingerprint}
                   if hasattr(q, "Q") else {"Q": float(q)})
            for name, q in (("rate", q_rate), ("variance", q_var))
        },
    }
    return PipelineResult(
        rate=StageResult(rate_test, rate_cps, estimate_profile(series, rate_cps, "rate"), rate_proc),
        variance=StageResult(var_test, var_cps,
                             estimate_profile(series, var_cps, "variance", means), var_proc),
        config=config,
    )


def correctly_detected(true_times, estimated):
    """True change points lying within ``h`` of some estimate (``h`` = its window)."""
    est = [(c.time, c.h) for c in estimated]
    return np.array([any(abs(c - t) <= h for t, h in est) for c in true_times], dtype=bool)
