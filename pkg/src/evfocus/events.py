"""Event containers, text-file ingestion and windowing.

Events are kept as parallel numpy arrays (``t``, ``x``, ``y``, ``p``) rather
than lists of objects; a single :class:`Event` is materialized only when
iterating.  Polarity is always stored as +1/-1.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "Event",
    "EventArray",
    "EventWindow",
    "LoadedEvents",
    "EventParseError",
    "load_events",
    "save_events",
    "slice_by_count",
    "reference_time",
]


class EventParseError(ValueError):
    """Malformed line in an event file."""

    def __init__(self, path, lineno, line):
        super().__init__(f"{path}:{lineno}: cannot parse event line {line!r}")
        self.lineno = lineno


@dataclass(frozen=True)
class Event:
    t: float
    x: int
    y: int
    polarity: int


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True).reshape(-1)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class EventArray:
    """Structure-of-arrays event sequence.

    ``x`` and ``y`` are float arrays: files hold integer pixels, but the
    synthetic generator produces sub-pixel positions.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", _readonly(self.t, np.float64))
        object.__setattr__(self, "x", _readonly(self.x, np.float64))
        object.__setattr__(self, "y", _readonly(self.y, np.float64))
        object.__setattr__(self, "p", _readonly(self.p, np.float64))
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event arrays must have equal length")
        if n and not np.all(np.abs(self.p) == 1):
            raise ValueError("polarity must be +1 or -1")

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        return cls(z, z, z, z)

    @classmethod
    def from_events(cls, events):
        events = list(events)
        if not events:
            return cls.empty()
        return cls(
            [e.t for e in events],
            [e.x for e in events],
            [e.y for e in events],
            [e.polarity for e in events],
        )

    def __len__(self):
        return len(self.t)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return Event(float(self.t[idx]), self.x[idx].item(), self.y[idx].item(), int(self.p[idx]))
        return EventArray(self.t[idx], self.x[idx], self.y[idx], self.p[idx])

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0]) if len(self) else 0.0


def reference_time(t, mode="mid"):
    """Reference time of a window whose timestamps are ``t`` (sorted)."""
    if len(t) == 0:
        return 0.0
    if mode == "mid":
        return 0.5 * (float(t[0]) + float(t[-1]))
    if mode == "first":
        return float(t[0])
    if mode == "last":
        return float(t[-1])
    raise ValueError(f"unknown t_ref mode {mode!r}")


@dataclass(frozen=True, eq=False)
class EventWindow:
    """Events processed together, warped to the common time ``t_ref``."""

    events: EventArray
    t_ref: float

    @classmethod
    def from_arrays(cls, t, x, y, p, t_ref=None, ref="mid"):
        ev = EventArray(t, x, y, p)
        if t_ref is None:
            t_ref = reference_time(ev.t, ref)
        return cls(ev, float(t_ref))

    @property
    def t(self):
        return self.events.t

    @property
    def x(self):
        return self.events.x

    @property
    def y(self):
        return self.events.y

    @property
    def p(self):
        return self.events.p

    def __len__(self):
        return len(self.events)

    def subset(self, mask):
        return EventWindow(self.events[mask], self.t_ref)


class LoadedEvents(NamedTuple):
    events: EventArray
    n_dropped: int


def _parse_slow(path, lines):
    rows = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split()
        try:
            if len(parts) != 4:
                raise ValueError
            t = float(parts[0])
            x, y, p = int(parts[1]), int(parts[2]), int(parts[3])
            if p not in (0, 1):
                raise ValueError
        except ValueError:
            raise EventParseError(path, lineno, line.rstrip("\n")) from None
        rows.append((t, x, y, p))
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def load_events(path, geometry=None, width=None, height=None) -> LoadedEvents:
    """Read an ``events.txt`` file with lines ``t x y p`` (p in {0, 1}).

    Events outside the sensor (taken from ``geometry`` or ``width``/``height``)
    are dropped and counted.  Decreasing timestamps only trigger a warning.
    """
    path = Path(path)
    if geometry is not None:
        width, height = geometry.width, geometry.height
    text = path.read_text()
    lines = text.splitlines()
    if not any(s.strip() for s in lines):
        return LoadedEvents(EventArray.empty(), 0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            data = np.loadtxt(path, dtype=np.float64, ndmin=2)
        if data.shape[1] != 4 or not np.all(np.isin(data[:, 3], (0.0, 1.0))):
            raise ValueError
        if not np.all(data[:, 1:3] == np.round(data[:, 1:3])):
            raise ValueError
    except ValueError:
        data = _parse_slow(path, lines)

    t, x, y = data[:, 0], data[:, 1], data[:, 2]
    p = np.where(data[:, 3] > 0.5, 1.0, -1.0)
    keep = (x >= 0) & (y >= 0)
    if width is not None:
        keep &= x < width
    if height is not None:
        keep &= y < height
    n_dropped = int(np.count_nonzero(~keep))
    if n_dropped:
        logger.warning("%s: dropped %d out-of-bounds events", path, n_dropped)
    t, x, y, p = t[keep], x[keep], y[keep], p[keep]
    if len(t) > 1 and np.any(np.diff(t) < 0):
        warnings.warn(f"{path}: timestamps are not monotone", RuntimeWarning, stacklevel=2)
    return LoadedEvents(EventArray(t, x, y, p), n_dropped)


def save_events(path, events: EventArray, precision=9):
    """Write events in the ``t x y p`` text format (polarity as 0/1)."""
    x = np.asarray(events.x)
    y = np.asarray(events.y)
    if not (np.all(x == np.round(x)) and np.all(y == np.round(y))):
        raise ValueError("event coordinates must be integral to be saved; round them first")
    p01 = (np.asarray(events.p) > 0).astype(np.int64)
    with open(path, "w", newline="\n") as fh:
        for ti, xi, yi, pi in zip(events.t, x.astype(np.int64), y.astype(np.int64), p01):
            fh.write(f"{ti:.{precision}f} {xi} {yi} {pi}\n")


def slice_by_count(stream: EventArray, n, stride=None, ref="mid"):
    """Cut ``stream`` into windows of exactly ``n`` consecutive events.

    Windows start at 0, stride, 2*stride, ...; a trailing partial window is
    dropped.  ``stride`` defaults to ``n`` (non-overlapping windows).
    """
    if stride is None:
        stride = n
    if n < 1 or stride < 1:
        raise ValueError("n and stride must be >= 1")
    windows = []
    for start in range(0, len(stream) - n + 1, stride):
        ev = stream[start : start + n]
        windows.append(EventWindow(ev, reference_time(ev.t, ref)))
    return windows
