"""Renewal processes and piecewise renewal processes with change points.

A composite process is built literally from independent renewal
processes: each segment law is simulated from time 0 and only the
events falling into its own segment ``(c_{j-1}, c_j]`` are kept.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _rng
from .series import EventSeries

RATE, VARIANCE, BOTH = "rate", "variance", "both"


def _gamma_sampler(law, rng, size):
    return rng.gamma(law.shape, law.scale, size)


# family name -> sampler(law, rng, size); extend to add life time families
SAMPLERS = {"gamma": _gamma_sampler}


@dataclass(frozen=True)
class LifetimeLaw:
    """Life time distribution given by its mean and standard deviation."""

    mean: float
    sd: float
    family: str = "gamma"

    def __post_init__(self):
        if not (self.mean > 0 and self.sd > 0):
            raise ValueError(
                f"life time mean and sd must be positive, got mean={self.mean}, sd={self.sd}"
            )
        if self.family not in SAMPLERS:
            raise ValueError(f"unknown life time family {self.family!r}")

    @classmethod
    def from_variance(cls, mean, variance, family="gamma"):
        if not variance > 0:
            raise ValueError(f"variance must be positive, got {variance}")
        return cls(mean, math.sqrt(variance), family)

    @property
    def variance(self):
        return self.sd**2

    @property
    def shape(self):
        return self.mean**2 / self.sd**2

    @property
    def scale(self):
        return self.sd**2 / self.mean

    @property
    def nu2(self):
        """Variance of ``(xi - mean)**2``; closed form for the gamma family."""
        if self.family != "gamma":
            raise NotImplementedError(self.family)
        k, theta = self.shape, self.scale
        return 2.0 * k * (k + 3.0) * theta**4

    def sample(self, rng, size):
        return SAMPLERS[self.family](self, rng, size)


def gamma_nu2(mean, sd):
    return LifetimeLaw(mean, sd).nu2


@dataclass(frozen=True)
class ChangePointModel:
    """Piecewise renewal model: ``laws[j]`` governs ``(c_{j-1}, c_j]``."""

    T: float
    change_points: tuple
    laws: tuple
    strict: bool = True

    def __post_init__(self):
        cps = tuple(float(c) for c in self.change_points)
        laws = tuple(self.laws)
        object.__setattr__(self, "change_points", cps)
        object.__setattr__(self, "laws", laws)
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        bounds = (0.0,) + cps + (float(self.T),)
        if any(b <= a for a, b in zip(bounds, bounds[1:])):
            raise ValueError("change points must satisfy 0 < c_1 < ... < c_k < T")
        if len(laws) != len(cps) + 1:
            raise ValueError(
                f"{len(cps)} change points need {len(cps) + 1} segment laws, got {len(laws)}"
            )
        for a, b in zip(laws, laws[1:]):
            if self.strict and (a.mean, a.variance) == (b.mean, b.variance):
                raise ValueError("adjacent segments must differ in mean or variance")

    @property
    def boundaries(self):
        return (0.0,) + self.change_points + (float(self.T),)

    def segments(self):
        b = self.boundaries
        return [(b[j], b[j + 1], law) for j, law in enumerate(self.laws)]


def _renewal_times(law, horizon, rng):
    """Cumulative sums of i.i.d. life times, truncated at ``horizon``."""
    expected = horizon / law.mean
    spread = math.sqrt(horizon * law.variance / law.mean**3)
    chunk = int(expected + 6.0 * spread) + 16
    parts = []
    last = 0.0
    while last <= horizon:
        s = last + np.cumsum(law.sample(rng, chunk))
        parts.append(s)
        last = s[-1]
        chunk = max(16, chunk // 4)
    times = np.concatenate(parts)
    times = times[: np.searchsorted(times, horizon, side="right")]
    # life times below one ulp of the clock (frequent for shapes < 1) would
    # give tied events; merging them into the next life time changes nothing measurable
    return times[np.diff(times, prepend=0.0) > 0]


def _as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return _rng.substream(seed, _rng.SEGMENT, 0)


def sample_renewal(law, T, seed):
    """Simulate a renewal process with life time law ``law`` on ``(0, T]``.

    ``seed`` is an int or a ``numpy.random.Generator``.
    """
    if not T > 0:
        raise ValueError("horizon T must be positive")
    return EventSeries(_renewal_times(law, T, _as_generator(seed)), T)


def sample_composite(model, seed):
    """Simulate a process with change points.

    Segment ``j`` draws from its own sub-stream ``(seed, j)``; its process
    runs from 0 and is restricted to ``(c_{j-1}, c_j]``.  Events after
    ``c_j`` never enter the result, so simulation stops there.
    """
    pieces = []
    for j, (lo, hi, law) in enumerate(model.segments()):
        rng = _rng.substream(seed, _rng.SEGMENT, j)
        times = _renewal_times(law, hi, rng)
        pieces.append(times[times > lo])
    return EventSeries(np.concatenate(pieces), model.T)


def fig3_model(T=2000.0):
    """Two rate and two variance change points (rate at 430, 1060; variance at 630, 1490)."""
    pairs = [(0.25, 0.03), (0.35, 0.03), (0.35, 0.0216), (0.45, 0.0216), (0.45, 0.0357)]
    laws = tuple(LifetimeLaw.from_variance(m, v) for m, v in pairs)
    return ChangePointModel(T, (430.0, 630.0, 1060.0, 1490.0), laws)


def fig3_rate_only_model(T=2000.0, variance=0.03):
    """Rates of :func:`fig3_model` with a constant life time variance."""
    laws = tuple(LifetimeLaw.from_variance(m, variance) for m in (0.25, 0.35, 0.45))
    return ChangePointModel(T, (430.0, 1060.0), laws)


PRESETS = {"fig3": fig3_model, "fig3-rate-only": fig3_rate_only_model}


@dataclass(frozen=True)
class TrueChangePoint:
    time: float
    kind: str


DESIGN_KINDS = ("rate_only", "variance_only", "mixed")


@dataclass(frozen=True)
class RandomDesign:
    """Random change point design.

    ``rate_only``
        Gaps ~ U[0, gap_max]; state 1 jumps at odd change points to a
        uniformly drawn other mean multiplier and back at even ones.
    ``variance_only``
        Same switching rule on the variance multipliers, mean fixed.
    ``mixed``
        Each change point independently changes the rate, the variance
        or both with probability 1/3; each affected component follows
        the jump-away / jump-back rule on its own.

    Draws are repeated until all change points lie in
    ``(margin, T - margin)``.
    """

    kind: str
    mean: float
    sd: float
    gap_max: float
    mean_factors: tuple = (1.0, 0.8, 1.2, 1.6)
    variance_factors: tuple = (1.0, 1.4, 1.6, 2.0)
    margin: float = 0.0
    family: str = "gamma"

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise ValueError(f"unknown design {self.kind!r}; expected one of {DESIGN_KINDS}")
        if not self.gap_max > 0:
            raise ValueError("gap_max must be positive")

    @classmethod
    def rate_only(cls, mean, sd, gap_max=800.0, margin=0.0):
        return cls("rate_only", mean, sd, gap_max, margin=margin)

    @classmethod
    def variance_only(cls, mean, sd, gap_max=1200.0, margin=0.0):
        return cls("variance_only", mean, sd, gap_max, margin=margin)

    @classmethod
    def mixed(cls, mean, sd, gap_max=800.0, margin=0.0):
        return cls("mixed", mean, sd, gap_max, margin=margin)

    def law(self, mean_state, var_state):
        m = self.mean * self.mean_factors[mean_state]
        v = self.sd**2 * self.variance_factors[var_state]
        return LifetimeLaw.from_variance(m, v, self.family)


def _draw_change_points(design, T, rng):
    if design.margin * 2 >= T:
        raise ValueError("design margin leaves no room for change points")
    while True:
        gaps = []
        total = 0.0
        while total < T:
            g = rng.uniform(0.0, design.gap_max)
            total += g
            gaps.append(total)
        cps = gaps[:-1]
        if not cps or (cps[0] > design.margin and cps[-1] < T - design.margin):
            return cps


def _switch(state, n_states, rng):
    if state != 0:
        return 0
    return int(rng.integers(1, n_states))


def draw_design_model(design, T, rng):
    """Draw a :class:`ChangePointModel` and the kinds of its change points."""
    cps = _draw_change_points(design, T, rng)
    mean_state = var_state = 0
    n_mean, n_var = len(design.mean_factors), len(design.variance_factors)
    states = [(0, 0)]
    kinds = []
    for _ in cps:
        if design.kind == "rate_only":
            kind = RATE
        elif design.kind == "variance_only":
            kind = VARIANCE
        else:
            kind = (RATE, VARIANCE, BOTH)[int(rng.integers(3))]
        if kind in (RATE, BOTH):
            mean_state = _switch(mean_state, n_mean, rng)
        if kind in (VARIANCE, BOTH):
            var_state = _switch(var_state, n_var, rng)
        states.append((mean_state, var_state))
        kinds.append(kind)
    laws = tuple(design.law(m, v) for m, v in states)
    # degenerate factor tables (e.g. a no-change control) may repeat a law
    model = ChangePointModel(T, tuple(cps), laws, strict=False)
    return model, tuple(TrueChangePoint(c, k) for c, k in zip(model.change_points, kinds))


def sample_random_design(design, T, seed):
    """Draw a random change point model and simulate it.

    Returns ``(series, truth, model)``; ``truth`` lists the change points
    with their kind (``"rate"``, ``"variance"`` or ``"both"``).
    """
    model, truth = draw_design_model(design, T, _rng.substream(seed, _rng.DESIGN))
    return sample_composite(model, seed), truth, model
