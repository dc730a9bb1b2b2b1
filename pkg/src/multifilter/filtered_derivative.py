"""Filtered derivative processes for rate, variance and k-th moments.

For a window size ``h`` and a grid time ``t`` the left and right windows
``(t-h, t]`` and ``(t, t+h]`` each collect the life times lying fully
inside them; the life time reaching into a window from the left is
never used.  When rate change points are supplied, life times that
straddle one of them are dropped as well.

All window statistics come from prefix sums over the life times, which
makes a whole process cost ``O(N + grid)``.  Quantities are centred
before summation so that differences of prefix sums keep their
precision.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SegmentMeans:
    """Mean life time per segment between (estimated) rate change points."""

    change_points: tuple
    means: tuple

    @classmethod
    def estimate(cls, series, change_points=()):
        cps = np.sort(np.asarray(change_points, dtype=float))
        seg, valid = assign_segments(series, cps)
        xi = series.lifetimes
        means = []
        for j in range(cps.size + 1):
            sel = valid & (seg == j)
            means.append(float(xi[sel].mean()) if sel.any() else float("nan"))
        return cls(tuple(cps.tolist()), tuple(means))

    @classmethod
    def global_mean(cls, series):
        return cls.estimate(series, ())

    def __post_init__(self):
        if len(self.means) != len(self.change_points) + 1:
            raise ValueError("need one mean per segment")


def assign_segments(series, change_points):
    """Segment index of every life time and whether it avoids all change points.

    Life time ``i`` spans ``(S_{i-1}, S_i]``; it is invalid when a change
    point lies in that interval.
    """
    cps = np.asarray(change_points, dtype=float)
    ends = series.times
    starts = ends - series.lifetimes
    seg = np.searchsorted(cps, ends, side="left")
    crossed = np.searchsorted(cps, ends, side="right") - np.searchsorted(cps, starts, side="right")
    return seg, crossed == 0


@dataclass(frozen=True)
class WindowIndexSets:
    left: np.ndarray
    right: np.ndarray


def window_index_sets(series, t, h, rate_change_points=()):
    """Indices (into ``series.lifetimes``) of the life times used at ``(t, h)``."""
    n_lo, n_t, n_hi = series.count([t - h, t, t + h])
    _, valid = assign_segments(series, rate_change_points)
    left = np.arange(n_lo + 1, n_t)
    right = np.arange(n_t + 1, n_hi)
    return WindowIndexSets(left[valid[left]], right[valid[right]])


def _snap(d, ref):
    """Zero out differences at the rounding level of ``ref``."""
    d = np.array(d, dtype=float)
    d[np.abs(d) <= 16 * _EPS * np.abs(ref)] = 0.0
    return d


def nu_hat(lifetimes, mean):
    """Mean squared deviation of ``(xi - mean)^2`` from its own average.

    ``mean`` is a scalar or one mean per life time; empty input gives 0.
    """
    xi = np.asarray(lifetimes, dtype=float)
    if xi.size == 0:
        return 0.0
    v = _snap(xi - mean, mean) ** 2
    return float(np.mean((v - v.mean()) ** 2))


@dataclass
class DerivativeProcess:
    """Filtered derivative ``G`` of one window on the grid points of ``[h, T-h]``."""

    h: float
    t: np.ndarray
    G: np.ndarray
    n_le: np.ndarray
    n_ri: np.ndarray
    s_hat: np.ndarray
    kind: str = "variance"

    def max_abs(self):
        """``(max |G|, argmax t)``; ties resolve to the earliest time."""
        a = np.abs(self.G)
        i = int(np.argmax(a))
        return float(a[i]), float(self.t[i])


class _Windows:
    """Per-series prefix sums shared by all windows."""

    def __init__(self, series, grid, valid=None):
        if series.T != grid.T:
            raise ValueError(f"series horizon {series.T} differs from grid horizon {grid.T}")
        self.series = series
        self.grid = grid
        self.xi = series.lifetimes
        self.valid = np.ones(self.xi.size, bool) if valid is None else valid
        self.n_total = max(int(self.valid.sum()), 1)
        self.counts_at_grid = series.count(grid.times)
        self.prefix_count = self.prefix(np.ones_like(self.xi))
        self.prefix_xi = self.prefix(self.xi)

    def prefix(self, values):
        p = np.zeros(values.size + 1)
        np.cumsum(np.where(self.valid, values, 0.0), out=p[1:])
        return p

    def ranges(self, h):
        k = self.grid.index(h, "window")
        i = np.arange(k, self.grid.n - k + 1)
        n_lo = self.counts_at_grid[i - k]
        n_t = self.counts_at_grid[i]
        n_hi = self.counts_at_grid[i + k]
        left = (np.minimum(n_lo + 1, n_t), n_t)
        right = (np.minimum(n_t + 1, n_hi), n_hi)
        return i, (n_lo, n_t, n_hi), left, right

    @staticmethod
    def window_sum(p, rng):
        lo, hi = rng
        return p[hi] - p[lo]

    def centred_moments(self, values, ref, rng, count):
        """Window mean and variance (divisor ``count``) of ``values``."""
        y = _snap(values - ref, ref)
        p1, p2 = self.prefix(y), self.prefix(y * y)
        safe = np.maximum(count, 1)
        m1 = self.window_sum(p1, rng) / safe
        m2 = self.window_sum(p2, rng) / safe
        var = np.maximum(m2 - m1 * m1, 0.0)
        scale = float(np.mean(y[self.valid] ** 2)) if self.valid.any() else 0.0
        var[var <= 1e-11 * scale * self.n_total / safe] = 0.0
        return m1, var


def _finish(h, grid, i, num, s2, n_le, n_ri, kind):
    s = np.sqrt(s2)
    ok = (n_le > 0) & (n_ri > 0) & (s > 0)
    G = np.zeros(i.size)
    G[ok] = num[ok] / s[ok]
    return DerivativeProcess(h, i * grid.delta, G, n_le, n_ri, np.where(ok, s, 0.0), kind)


def _valid_mean(prefix_xi, rng, n):
    return _Windows.window_sum(prefix_xi, rng) / np.maximum(n, 1)


def variance_processes(series, windows, grid, means=None):
    """Variance filtered derivative for every window in ``windows``.

    ``means`` is a :class:`SegmentMeans`; by default the global mean
    life time is used and no life time is excluded.
    """
    if means is None:
        means = SegmentMeans.global_mean(series)
    seg, valid = assign_segments(series, means.change_points)
    w = _Windows(series, grid, valid)
    mu = np.asarray(means.means)[seg]
    mu = np.where(valid, mu, 0.0)
    v_hat = _snap(w.xi - mu, mu) ** 2
    ref = float(v_hat[valid].mean()) if valid.any() else 0.0
    out = []
    for h in windows:
        i, _, left, right = w.ranges(h)
        n_le = w.window_sum(w.prefix_count, left)
        n_ri = w.window_sum(w.prefix_count, right)
        m_le, nu_le = w.centred_moments(v_hat, ref, left, n_le)
        m_ri, nu_ri = w.centred_moments(v_hat, ref, right, n_ri)
        mu_le = _valid_mean(w.prefix_xi, left, n_le)
        mu_ri = _valid_mean(w.prefix_xi, right, n_ri)
        s2 = nu_ri * mu_ri / h + nu_le * mu_le / h
        out.append(_finish(h, grid, i, m_ri - m_le, s2, n_le, n_ri, "variance"))
    return out


def rate_processes(series, windows, grid):
    """Rate filtered derivative: event count difference over its estimated sd."""
    w = _Windows(series, grid)
    ref = float(w.xi.mean()) if w.xi.size else 0.0
    out = []
    for h in windows:
        i, (n_lo, n_t, n_hi), left, right = w.ranges(h)
        n_le = w.window_sum(w.prefix_count, left)
        n_ri = w.window_sum(w.prefix_count, right)
        m_le, var_le = w.centred_moments(w.xi, ref, left, n_le)
        m_ri, var_ri = w.centred_moments(w.xi, ref, right, n_ri)
        mu_le, mu_ri = ref + m_le, ref + m_ri
        num = (n_hi - n_t) - (n_t - n_lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            s2 = np.where((n_le > 0) & (n_ri > 0),
                          h * var_ri / mu_ri**3 + h * var_le / mu_le**3, 0.0)
        out.append(_finish(h, grid, i, num.astype(float), s2, n_le, n_ri, "rate"))
    return out


def moment_processes(series, windows, grid, k):
    """Filtered derivative of the k-th raw moment of the life times."""
    if int(k) != k or k < 1:
        raise ValueError(f"moment order must be a positive integer, got {k}")
    w = _Windows(series, grid)
    x = w.xi ** int(k)
    ref = float(x.mean()) if x.size else 0.0
    out = []
    for h in windows:
        i, _, left, right = w.ranges(h)
        n_le = w.window_sum(w.prefix_count, left)
        n_ri = w.window_sum(w.prefix_count, right)
        m_le, var_le = w.centred_moments(x, ref, left, n_le)
        m_ri, var_ri = w.centred_moments(x, ref, right, n_ri)
        mu_le = _valid_mean(w.prefix_xi, left, n_le)
        mu_ri = _valid_mean(w.prefix_xi, right, n_ri)
        s2 = var_ri * mu_ri / h + var_le * mu_le / h
        out.append(_finish(h, grid, i, m_ri - m_le, s2, n_le, n_ri, f"moment-{int(k)}"))
    return out


def variance_G(series, h, grid, means=None):
    return variance_processes(series, [h], grid, means)[0]


def rate_G(series, h, grid):
    return rate_processes(series, [h], grid)[0]


def moment_G(series, h, grid, k):
    return moment_processes(series, [h], grid, k)[0]


def write_processes_csv(processes, path):
    """CSV with columns ``h, t, G, n_le, n_ri, s_hat`` (one row per grid point)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["h", "t", "G", "n_le", "n_ri", "s_hat"])
        for p in processes:
            for row in zip(p.t, p.G, p.n_le, p.n_ri, p.s_hat):
                out.writerow([repr(float(p.h)), repr(float(row[0])), repr(float(row[1])),
                              int(row[2]), int(row[3]), repr(float(row[4]))])
