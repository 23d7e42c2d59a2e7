"""Piecewise laser schedules: ramps along parametrized paths, and holds.

A path is any callable mapping s in [0, 1] to a laser point (omega, delta).
Segments carry a duration; a pulse is an ordered list of segments that is
continuous in (omega, delta) and starts and ends with omega = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class LaserPoint:
    """Rabi frequency and detuning, both in rad/us (hbar = 1)."""

    omega: float
    delta: float

    def __post_init__(self):
        if self.omega < 0:
            raise InputError("Rabi frequency must be >= 0")


@dataclass(frozen=True)
class LinearPath:
    """Straight segment between two laser points, parametrized by s in [0, 1]."""

    start: LaserPoint
    end: LaserPoint

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        omega = (1.0 - s) * self.start.omega + s * self.end.omega
        delta = (1.0 - s) * self.start.delta + s * self.end.delta
        return omega, delta


@dataclass(frozen=True)
class RampSegment:
    """Sweep along ``path`` over ``duration`` microseconds."""

    path: object  # callable s -> (omega, delta)
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise InputError("segment duration must be >= 0")

    def endpoints(self) -> tuple[LaserPoint, LaserPoint]:
        o0, d0 = self.path(0.0)
        o1, d1 = self.path(1.0)
        return LaserPoint(float(o0), float(d0)), LaserPoint(float(o1), float(d1))


@dataclass(frozen=True)
class HoldSegment:
    """Constant laser parameters for ``duration`` microseconds."""

    point: LaserPoint
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise InputError("segment duration must be >= 0")

    def endpoints(self) -> tuple[LaserPoint, LaserPoint]:
        return self.point, self.point


_CONTINUITY_TOL = 1e-9


@dataclass(frozen=True)
class PiecewisePulse:
    """Ordered laser segments, continuous in (omega, delta), omega = 0 at both ends."""

    segments: tuple

    def __post_init__(self):
        if not self.segments:
            raise InputError("pulse needs at least one segment")
        prev_end = None
        for seg in self.segments:
            a, b = seg.endpoints()
            if prev_end is not None:
                if (
                    abs(a.omega - prev_end.omega) > _CONTINUITY_TOL
                    or abs(a.delta - prev_end.delta) > _CONTINUITY_TOL
                ):
                    raise InputError("pulse segments are discontinuous in (omega, delta)")
            prev_end = b
        first, _ = self.segments[0].endpoints()
        _, last = self.segments[-1].endpoints()
        if abs(first.omega) > _CONTINUITY_TOL or abs(last.omega) > _CONTINUITY_TOL:
            raise InputError("pulse must start and end with omega = 0")

    @property
    def duration(self) -> float:
        return float(sum(seg.duration for seg in self.segments))

    def point_at(self, t: float) -> LaserPoint:
        """Laser point at absolute time t (clamped to the pulse window)."""
        if t <= 0:
            p, _ = self.segments[0].endpoints()
            return p
        for seg in self.segments:
            if t <= seg.duration or seg is self.segments[-1]:
                if isinstance(seg, HoldSegment):
                    return seg.point
                s = 1.0 if seg.duration == 0 else min(1.0, t / seg.duration)
                o, d = seg.path(s)
                return LaserPoint(float(o), float(d))
            t -= seg.duration
        _, p = self.segments[-1].endpoints()
        return p

    def sample(self, points_per_segment: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(t, omega, delta) arrays with points_per_segment samples per segment."""
        ts, oms, des = [], [], []
        t0 = 0.0
        for seg in self.segments:
            s = np.linspace(0.0, 1.0, points_per_segment)
            if isinstance(seg, HoldSegment):
                om = np.full_like(s, seg.point.omega)
                de = np.full_like(s, seg.point.delta)
            else:
                om, de = seg.path(s)
                om = np.broadcast_to(np.asarray(om, dtype=float), s.shape)
                de = np.broadcast_to(np.asarray(de, dtype=float), s.shape)
            ts.append(t0 + s * seg.duration)
            oms.append(np.asarray(om, dtype=float))
            des.append(np.asarray(de, dtype=float))
            t0 += seg.duration
        return np.concatenate(ts), np.concatenate(oms), np.concatenate(des)


def linear_ramp(start: LaserPoint, end: LaserPoint, duration: float) -> RampSegment:
    """Linear sweep: omega(t) = (1 - t/T) omega0 + (t/T) omega1, same for delta."""
    if duration <= 0:
        raise InputError("linear ramp needs duration > 0")
    return RampSegment(path=LinearPath(start, end), duration=duration)
