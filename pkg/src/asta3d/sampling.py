"""Farthest point sampling and radius-bounded neighbor queries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

K_NEIGHBORS = 8


@dataclass(frozen=True)
class CoreSet:
    indices: np.ndarray      # [N] into the sampled point set
    positions: np.ndarray    # [N, 3]
    timestamps: np.ndarray   # [N]
    distances: np.ndarray    # [N] min-distance of each pick at selection time (first is inf)


def _positions(points):
    return np.asarray(getattr(points, "positions", points), dtype=np.float64).reshape(-1, 3)


def farthest_point_sample(points, n, seed_index=0, timestamps=None):
    """Greedy FPS over 3-D coordinates; ties go to the lowest index."""
    pos = _positions(points)
    if timestamps is None:
        timestamps = getattr(points, "timestamps", np.zeros(len(pos)))
    timestamps = np.asarray(timestamps, dtype=np.float64)
    total = len(pos)
    if n > total:
        raise ValueError(f"cannot sample {n} points from {total}")
    if not 0 <= seed_index < total:
        raise ValueError(f"seed index {seed_index} outside [0, {total})")
    chosen = np.empty(n, dtype=np.int64)
    picked_at = np.empty(n)
    mind = np.full(total, np.inf)
    cur, cur_d = seed_index, np.inf
    for i in range(n):
        chosen[i] = cur
        picked_at[i] = cur_d
        diff = pos - pos[cur]
        mind = np.minimum(mind, np.sqrt((diff * diff).sum(axis=1)))
        mind[chosen[: i + 1]] = -np.inf
        cur = int(np.argmax(mind))
        cur_d = mind[cur]
    return CoreSet(chosen, pos[chosen], timestamps[chosen], picked_at)


def farthest_point_sample_per_frame(points, n_per_frame, timestamps=None, seed_index=0):
    """FPS run independently inside each frame; indices come back frame-major."""
    pos = _positions(points)
    if timestamps is None:
        timestamps = points.timestamps
    timestamps = np.asarray(timestamps, dtype=np.float64)
    picks, dists = [], []
    for t in np.unique(timestamps):
        members = np.flatnonzero(timestamps == t)
        sub = farthest_point_sample(pos[members], n_per_frame, seed_index=min(seed_index, len(members) - 1))
        picks.append(members[sub.indices])
        dists.append(sub.distances)
    idx = np.concatenate(picks)
    return CoreSet(idx, pos[idx], timestamps[idx], np.concatenate(dists))


@dataclass(frozen=True)
class NeighborGroup:
    """K neighbor slots for one anchor; slots past ``valid_count`` repeat slot 0."""

    indices: np.ndarray
    valid_count: int


def _fill(found, k):
    if not found:
        return NeighborGroup(np.zeros(k, dtype=np.int64), 0)
    found = list(found[:k])
    n = len(found)
    return NeighborGroup(np.array(found + [found[0]] * (k - n), dtype=np.int64), n)


def radius_query_naive(center, t, positions, timestamps, radii, k=K_NEIGHBORS):
    """Reference scan: first ``k`` points in index order with distance < radii[|dt|]."""
    cx, cy, cz = (float(v) for v in center)
    found = []
    for i, (p, ti) in enumerate(zip(positions, timestamps)):
        delta = int(abs(ti - t))
        if delta >= len(radii):
            continue
        dx, dy, dz = p[0] - cx, p[1] - cy, p[2] - cz
        if math.sqrt(dx * dx + dy * dy + dz * dz) < radii[delta]:
            found.append(i)
            if len(found) == k:
                break
    return _fill(found, k)


class GridIndex:
    """Uniform spatial hash over 3-D positions."""

    def __init__(self, positions, timestamps, cell_size):
        if not cell_size > 0:
            raise ValueError(f"cell size must be positive, got {cell_size}")
        self.positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        self.timestamps = np.asarray(timestamps, dtype=np.float64)
        self.cell_size = float(cell_size)
        keys = np.floor(self.positions / self.cell_size).astype(np.int64)
        self.cells = {}
        for i, key in enumerate(map(tuple, keys)):
            self.cells.setdefault(key, []).append(i)
        self.cells = {key: np.array(v, dtype=np.int64) for key, v in self.cells.items()}

    def candidates(self, center, radius):
        """Sorted indices of every point in cells overlapping the query ball."""
        s = self.cell_size
        lo = np.floor((np.asarray(center) - radius) / s).astype(np.int64) - 1
        hi = np.floor((np.asarray(center) + radius) / s).astype(np.int64) + 1
        span = np.prod(hi - lo + 1)
        if span > len(self.cells):
            hits = [v for key, v in self.cells.items()
                    if all(lo[a] <= key[a] <= hi[a] for a in range(3))]
        else:
            hits = []
            for x in range(lo[0], hi[0] + 1):
                for y in range(lo[1], hi[1] + 1):
                    for z in range(lo[2], hi[2] + 1):
                        cell = self.cells.get((x, y, z))
                        if cell is not None:
                            hits.append(cell)
        if not hits:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate(hits))

    def query(self, center, t, radii, k=K_NEIGHBORS):
        radii = np.asarray(radii, dtype=np.float64)
        cand = self.candidates(center, radii.max())
        if len(cand) == 0:
            return _fill([], k)
        delta = np.abs(self.timestamps[cand] - t).astype(np.int64)
        inside = delta < len(radii)
        cand, delta = cand[inside], delta[inside]
        p = self.positions[cand]
        dx, dy, dz = p[:, 0] - center[0], p[:, 1] - center[1], p[:, 2] - center[2]
        dist = np.sqrt(dx * dx + dy * dy + dz * dz)
        return _fill(cand[dist < radii[delta]][:k].tolist(), k)


def build_grid_index(positions, timestamps, cell_size):
    return GridIndex(positions, timestamps, cell_size)


def radius_query(center, t, positions, timestamps, radii, k=K_NEIGHBORS, index=None):
    if index is None:
        index = GridIndex(positions, timestamps, max(radii))
    return index.query(np.asarray(center, dtype=np.float64), t, radii, k)


@dataclass(frozen=True)
class Neighborhood:
    """Neighbor slots for every anchor of every core point."""

    indices: np.ndarray      # [N, 4, K]
    valid_count: np.ndarray  # [N, 4]


def query_anchors(anchors, positions, timestamps, radii, k=K_NEIGHBORS):
    index = GridIndex(positions, timestamps, float(np.max(radii)))
    n = anchors.positions.shape[0]
    out = np.zeros((n, 4, k), dtype=np.int64)
    counts = np.zeros((n, 4), dtype=np.int64)
    for i in range(n):
        for j in range(4):
            g = index.query(anchors.positions[i, j], anchors.timestamps[i, j], radii, k)
            out[i, j], counts[i, j] = g.indices, g.valid_count
    return Neighborhood(out, counts)
