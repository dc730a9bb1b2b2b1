"""Gaussian limit processes and Monte-Carlo rejection thresholds.

Both limit processes are functionals of one Brownian motion sampled on
a regular grid.  ``L`` is the parameter-free null limit of every
filtered derivative process in this package; ``L~`` is its variant for
the variance statistic next to a rate change point.  Thresholds must be
computed on the same grid the filtered derivative is evaluated on.
"""

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import partial, reduce
from pathlib import Path

import numpy as np

from . import _rng
from ._parallel import ordered_map

DEFAULT_N_SIMS = 10000
MIN_N_SIMS = 1000
BLOCK = 64  # paths per work unit; fixed so results ignore the worker count


def _frac(x):
    return Fraction(repr(float(x)))


def _frac_gcd(a, b):
    return Fraction(math.gcd(a.numerator * b.denominator, b.numerator * a.denominator),
                    a.denominator * b.denominator)


@dataclass(frozen=True)
class Grid:
    """Regular time grid ``0, delta, 2*delta, ..., T`` with ``n`` steps."""

    T: float
    delta: float
    n: int

    @classmethod
    def regular(cls, T, delta):
        n = int(round(T / delta))
        if n < 1 or abs(n * delta - T) > 1e-9 * T:
            raise ValueError(f"grid step {delta} does not divide T={T}")
        return cls(float(T), float(delta), n)

    @classmethod
    def for_windows(cls, T, windows, resolution=200):
        """Coarsest grid holding T and all windows with ``min(windows)/delta >= resolution``."""
        parts = [_frac(T)] + [_frac(h) for h in windows]
        g = reduce(_frac_gcd, parts)
        target = _frac(min(windows)) / resolution
        m = math.ceil(g / target)
        step = g / m
        return cls(float(T), float(step), int(_frac(T) / step))

    @property
    def times(self):
        return np.arange(self.n + 1) * self.delta

    def index(self, x, what="time"):
        k = int(round(x / self.delta))
        if abs(k * self.delta - x) > 1e-9 * max(abs(x), self.delta):
            raise ValueError(f"{what} {x} is not on the grid (step {self.delta})")
        return k

    def window_slice(self, h):
        """Grid indices of ``tau_h = [h, T - h]``."""
        k = self.index(h, "window")
        return slice(k, self.n - k + 1)

    def check_windows(self, windows):
        for h in windows:
            if not 0 < h <= self.T / 2:
                raise ValueError(f"window {h} outside (0, T/2] for T={self.T}")
            self.index(h, "window")


@dataclass(frozen=True)
class LTildeParams:
    """Rate change point ``c`` with means and ``Var((xi-mu)^2)`` on either side."""

    c: float
    mu1: float
    mu2: float
    nu1_sq: float
    nu2_sq: float

    def __post_init__(self):
        if min(self.c, self.mu1, self.mu2, self.nu1_sq, self.nu2_sq) <= 0:
            raise ValueError("L~ parameters must be strictly positive")

    @classmethod
    def gamma(cls, c, mu1, mu2, sd1, sd2):
        from .renewal_sim import gamma_nu2
        return cls(c, mu1, mu2, gamma_nu2(mu1, sd1), gamma_nu2(mu2, sd2))


def simulate_brownian(grid, seed, index=0):
    """Standard Brownian motion on ``grid`` from sub-stream ``(seed, index)``."""
    rng = _rng.substream(seed, _rng.BROWNIAN, index)
    w = np.empty(grid.n + 1)
    w[0] = 0.0
    np.cumsum(rng.standard_normal(grid.n) * math.sqrt(grid.delta), out=w[1:])
    return w


def _brownian_block(grid, seed, start, stop):
    return np.stack([simulate_brownian(grid, seed, i) for i in range(start, stop)])


def l_process(W, h, grid):
    """``L_{h,t}`` at the grid points of ``[h, T-h]``; ``W`` may be 2-d (paths x grid)."""
    k = grid.index(h, "window")
    if not 0 < h <= grid.T / 2:
        raise ValueError(f"window {h} outside (0, T/2]")
    W = np.asarray(W)
    n = grid.n
    return (W[..., 2 * k:] - 2.0 * W[..., k:n - k + 1] + W[..., :n - 2 * k + 1]) / math.sqrt(2.0 * h)


def window_means(t, h, p):
    """Limits of the left and right window means of the life times."""
    t = np.asarray(t, dtype=float)
    mu_ri = np.where(t <= p.c - h, p.mu1, p.mu2)
    mu_le = np.where(t <= p.c, p.mu1, p.mu2)
    ri = (t > p.c - h) & (t <= p.c)
    le = (t > p.c) & (t < p.c + h)
    with np.errstate(divide="ignore"):  # branches outside the mask may divide by 0
        mu_ri = np.where(ri, h / ((p.c - t) / p.mu1 + (t + h - p.c) / p.mu2), mu_ri)
        mu_le = np.where(le, h / ((p.c - t + h) / p.mu1 + (t - p.c) / p.mu2), mu_le)
    return mu_le, mu_ri


def scale_sq(t, h, p):
    """Squared scaling ``s_t^2`` of ``L~`` (``n = 1``), all branches."""
    t = np.asarray(t, dtype=float)
    mu_le, mu_ri = window_means(t, h, p)
    left = (p.mu1 * p.nu1_sq / h
            + (p.c - t) / (h**2 * p.mu1) * mu_ri**2 * p.nu1_sq
            + (t + h - p.c) / (h**2 * p.mu2) * mu_ri**2 * p.nu2_sq)
    right = ((p.c - t + h) / (h**2 * p.mu1) * mu_le**2 * p.nu1_sq
             + (t - p.c) / (h**2 * p.mu2) * mu_le**2 * p.nu2_sq
             + p.mu2 * p.nu2_sq / h)
    out = np.where(t <= p.c, left, right)
    out = np.where(t < p.c - h, 2 * p.nu1_sq / (h / p.mu1), out)
    return np.where(t > p.c + h, 2 * p.nu2_sq / (h / p.mu2), out)


def l_tilde_process(W, h, grid, p):
    """``L~_{h,t}`` on ``[h, T-h]``, sharing ``W`` with :func:`l_process`.

    Values with ``|t - c| > h`` are taken verbatim from ``L``.
    """
    if not h < p.c < grid.T - h:
        raise ValueError(f"change point {p.c} must lie in (h, T-h) = ({h}, {grid.T - h})")
    ic = grid.index(p.c, "change point")
    k = grid.index(h, "window")
    W = np.asarray(W, dtype=float)
    out = l_process(W, h, grid).copy()
    lo = max(ic - k, k)
    hi = min(ic + k, grid.n - k)
    idx = np.arange(lo, hi + 1)
    t = idx * grid.delta
    mu_le, mu_ri = window_means(t, h, p)
    s = np.sqrt(scale_sq(t, h, p))
    w_c = W[..., ic:ic + 1]
    w_t, w_p, w_m = W[..., idx], W[..., idx + k], W[..., idx - k]
    h2 = h * h
    before = (np.sqrt(mu_ri**2 * p.nu2_sq / (p.mu2 * h2)) * (w_p - w_c)
              + np.sqrt(mu_ri**2 * p.nu1_sq / (p.mu1 * h2)) * (w_c - w_t)
              - np.sqrt(p.mu1 * p.nu1_sq / h2) * (w_t - w_m))
    after = (np.sqrt(p.mu2 * p.nu2_sq / h2) * (w_p - w_t)
             - np.sqrt(mu_le**2 * p.nu2_sq / (p.mu2 * h2)) * (w_t - w_c)
             - np.sqrt(mu_le**2 * p.nu1_sq / (p.mu1 * h2)) * (w_c - w_m))
    out[..., idx - k] = np.where(idx <= ic, before, after) / s
    return out


def max_statistic(processes):
    """Global maximum of ``|process|`` over all windows (last axis = time)."""
    return reduce(np.maximum, (np.abs(x).max(axis=-1) for x in processes))


def _max_block(task, windows, grid, seed, tilde):
    start, stop = task
    W = _brownian_block(grid, seed, start, stop)
    m = max_statistic(l_process(W, h, grid) for h in windows)
    if tilde is None:
        return m
    mt = max_statistic(l_tilde_process(W, h, grid, tilde) for h in windows)
    return np.stack([m, mt])


def _blocks(n):
    return [(i, min(i + BLOCK, n)) for i in range(0, n, BLOCK)]


def simulate_max_statistics(windows, grid, n_sims, seed, workers=1, tilde=None):
    """Sample ``max_h max_t |L_{h,t}|`` over ``n_sims`` independent paths.

    With ``tilde`` (an :class:`LTildeParams`) the maxima of ``L~`` on the
    same paths are returned as well, as a ``(2, n_sims)`` array.
    """
    grid.check_windows(windows)
    func = partial(_max_block, windows=tuple(windows), grid=grid, seed=seed, tilde=tilde)
    parts = ordered_map(func, _blocks(n_sims), workers)
    return np.concatenate(parts, axis=-1)


def upper_quantile(sample, alpha):
    """Order statistic at rank ``ceil((1 - alpha) n)`` (at least rank 1)."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    x = np.sort(np.asarray(sample))
    rank = max(math.ceil((1.0 - alpha) * x.size - 1e-9), 1)
    return float(x[rank - 1])


@dataclass(frozen=True)
class Threshold:
    Q: float
    alpha: float
    n_sims: int
    seed: int
    windows: tuple
    T: float
    delta: float
    fingerprint: str

    def matches(self, grid):
        return self.T == grid.T and self.delta == grid.delta


def fingerprint(windows, grid, alpha, n_sims, seed):
    key = {
        "windows": [float(h) for h in sorted(windows)],
        "T": grid.T,
        "delta": grid.delta,
        "alpha": float(alpha),
        "n_sims": int(n_sims),
        "seed": int(seed),
    }
    blob = json.dumps(key, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def estimate_Q(windows, grid, alpha=0.05, n_sims=DEFAULT_N_SIMS, seed=0, workers=1):
    """Monte-Carlo ``(1 - alpha)``-quantile of the global maximum of ``|L|``."""
    if n_sims < MIN_N_SIMS:
        raise ValueError(
            f"n_sims={n_sims} is too small for a stable tail quantile; "
            f"use at least {MIN_N_SIMS} (default {DEFAULT_N_SIMS})"
        )
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    sample = simulate_max_statistics(windows, grid, n_sims, seed, workers)
    return Threshold(
        Q=upper_quantile(sample, alpha),
        alpha=float(alpha),
        n_sims=int(n_sims),
        seed=int(seed),
        windows=tuple(float(h) for h in sorted(windows)),
        T=grid.T,
        delta=grid.delta,
        fingerprint=fingerprint(windows, grid, alpha, n_sims, seed),
    )


class CalibrationCache:
    """JSON file mapping threshold fingerprints to computed thresholds."""

    def __init__(self, path):
        self.path = Path(path)

    def _load(self):
        if not self.path.exists():
            return {}
        try:
            data = json.loads(self.path.read_text())
            if not isinstance(data, dict):
                raise ValueError("top level is not an object")
            return data
        except ValueError as exc:
            warnings.warn(f"calibration cache {self.path} is unreadable ({exc}); recomputing")
            return {}

    def get(self, key):
        entry = self._load().get(key)
        if entry is None:
            return None
        try:
            return Threshold(**{**entry, "windows": tuple(entry["windows"])})
        except (TypeError, KeyError):
            warnings.warn(f"calibration cache entry {key} is malformed; recomputing")
            return None

    def put(self, threshold):
        data = self._load()
        data[threshold.fingerprint] = asdict(threshold)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def calibrate(windows, grid, alpha=0.05, n_sims=DEFAULT_N_SIMS, seed=0, cache=None, workers=1):
    """Load the threshold from ``cache`` or compute and store it."""
    key = fingerprint(windows, grid, alpha, n_sims, seed)
    store = CalibrationCache(cache) if cache is not None else None
    if store is not None:
        hit = store.get(key)
        if hit is not None:
            return hit
    threshold = estimate_Q(windows, grid, alpha, n_sims, seed, workers)
    if store is not None:
        store.put(threshold)
    return threshold


def _cov_block(task, grid, h, seed, tilde, columns):
    start, stop = task
    W = _brownian_block(grid, seed, start, stop)
    x = l_process(W, h, grid) if tilde is None else l_tilde_process(W, h, grid, tilde)
    return x[:, columns]


def covariance_curve(h, grid, anchor, offsets, n_sims=DEFAULT_N_SIMS, seed=0, tilde=None, workers=1):
    """Empirical ``Cov(X_{h,u}, X_{h,u+v})`` for ``X = L`` or ``L~``."""
    k = grid.index(h, "window")
    iu = grid.index(anchor, "anchor")
    cols = [iu] + [grid.index(anchor + v, "offset") for v in offsets]
    if min(cols) < k or max(cols) > grid.n - k:
        raise ValueError("anchor and offsets must stay inside [h, T-h]")
    columns = np.asarray(cols) - k
    func = partial(_cov_block, grid=grid, h=h, seed=seed, tilde=tilde, columns=columns)
    x = np.concatenate(ordered_map(func, _blocks(n_sims), workers))
    x = x - x.mean(axis=0)
    return (x[:, 1:] * x[:, :1]).sum(axis=0) / (x.shape[0] - 1)
