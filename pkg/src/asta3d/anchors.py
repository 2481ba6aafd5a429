"""Tetrahedral anchors around core points and the frame-interval radius schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_R2, _R6 = np.sqrt(2.0), np.sqrt(6.0)

# unit vectors from a core point to the 4 vertices of a regular tetrahedron
TETRAHEDRON = np.array([
    [_R2 / 3, -_R6 / 3, -1.0 / 3],
    [_R2 / 3, _R6 / 3, -1.0 / 3],
    [-2 * _R2 / 3, 0.0, -1.0 / 3],
    [0.0, 0.0, 1.0],
])
TETRAHEDRON.setflags(write=False)


@dataclass(frozen=True)
class AnchorSet:
    positions: np.ndarray   # [N, 4, 3]
    timestamps: np.ndarray  # [N, 4]
    delta_x: float


def make_anchors(core_positions, core_timestamps, delta_x):
    if not delta_x > 0:
        raise ValueError(f"anchor scale must be positive, got {delta_x}")
    core_positions = np.asarray(core_positions, dtype=np.float64).reshape(-1, 3)
    core_timestamps = np.asarray(core_timestamps, dtype=np.float64).reshape(-1)
    pos = core_positions[:, None, :] + delta_x * TETRAHEDRON[None]
    ts = np.repeat(core_timestamps[:, None], 4, axis=1)
    return AnchorSet(pos, ts, float(delta_x))


@dataclass(frozen=True)
class RadiusSchedule:
    """Query radius as a function of frame interval.

    The level-0 radius moves linearly from ``scale * band[0]`` at interval 0
    to ``scale * band[1]`` at interval ``frames - 1``; every FPS level
    doubles it, and no radius drops below the anchor distance ``delta_x``.
    """

    scale: float = 0.25
    frames: int = 8
    level: int = 0
    delta_x: float | None = None
    band: tuple = (0.5, 0.6)

    @property
    def anchor_scale(self):
        if self.delta_x is not None:
            return self.delta_x
        return 2 ** self.level * self.scale * self.band[0] / 2

    def unclamped(self, delta_t):
        lo, hi = self.band
        last = self.frames - 1
        if delta_t == 0 or last == 0:
            frac = lo
        elif delta_t == last:
            frac = hi
        else:
            frac = ((last - delta_t) * lo + delta_t * hi) / last
        return 2 ** self.level * self.scale * frac

    def radii(self):
        """Radius for every interval 0 .. frames-1."""
        return np.array([radius_for(self, d) for d in range(self.frames)])


def radius_for(schedule, delta_t):
    if delta_t < 0 or delta_t >= schedule.frames:
        raise ValueError(f"frame interval {delta_t} outside [0, {schedule.frames})")
    return max(schedule.anchor_scale, schedule.unclamped(int(delta_t)))
