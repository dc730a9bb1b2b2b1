"""Event series container and the plain-text event file format.

An event file holds one decimal event time per line, strictly
increasing.  An optional header line ``# T=<horizon>`` fixes the
observation horizon; without it the horizon is the last event time.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class EventSeries:
    """Sorted event times ``S_1 < S_2 < ...`` observed on ``(0, T]``."""

    times: np.ndarray
    T: float

    def __post_init__(self):
        times = np.array(self.times, dtype=float, copy=True).ravel()
        T = float(self.T)
        if not np.isfinite(T) or T <= 0:
            raise ValueError(f"horizon T must be positive, got {self.T!r}")
        if times.size:
            if times[0] <= 0 or times[-1] > T:
                raise ValueError("event times must lie in (0, T]")
            if np.any(np.diff(times) <= 0):
                raise ValueError("event times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "T", T)

    def __len__(self):
        return self.times.size

    @property
    def lifetimes(self):
        """Waiting times ``xi_i = S_i - S_{i-1}`` with ``S_0 = 0``."""
        return np.diff(self.times, prepend=0.0)

    def count(self, t):
        """Counting process ``N_t``: number of events in ``(0, t]``."""
        return np.searchsorted(self.times, t, side="right")

    def scaled(self, factor):
        return EventSeries(self.times * factor, self.T * factor)

    def reversed(self):
        """Mirror the series on ``[0, T]``: an event at ``s`` moves to ``T - s``.

        An event sitting exactly at ``T`` would land on 0 and is dropped.
        """
        mirrored = self.T - self.times[::-1]
        return EventSeries(mirrored[mirrored > 0], self.T)

    def __eq__(self, other):
        if not isinstance(other, EventSeries):
            return NotImplemented
        return self.T == other.T and np.array_equal(self.times, other.times)

    __hash__ = None


def write_events(series, path):
    """Write ``series`` to ``path`` with a ``# T=`` header.

    ``repr`` of a float round-trips exactly, so reading the file back
    gives a byte-identical series.
    """
    lines = [f"# T={float(series.T)!r}"]
    lines.extend(repr(float(s)) for s in series.times)
    Path(path).write_text("\n".join(lines) + "\n")


def read_events(path, T=None):
    """Read an event file.

    ``T`` overrides any header.  Raises ``ValueError`` for an empty file
    or malformed lines.
    """
    header_T = None
    values = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip().replace(" ", "")
            if body.startswith("T="):
                header_T = float(body[2:])
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a number: {raw!r}") from None
    if not values:
        raise ValueError(f"{path}: no event times found")
    horizon = T if T is not None else header_T if header_T is not None else values[-1]
    return EventSeries(np.asarray(values), horizon)
