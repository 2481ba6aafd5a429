import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from asta3d.anchors import TETRAHEDRON, RadiusSchedule, make_anchors, radius_for
from asta3d.sampling import (GridIndex, build_grid_index, farthest_point_sample,
                             farthest_point_sample_per_frame, query_anchors, radius_query,
                             radius_query_naive)

R2, R6 = math.sqrt(2), math.sqrt(6)


# ---- tetrahedron ------------------------------------------------------------

def test_tetrahedron_rows_are_unit_with_equal_angles():
    np.testing.assert_allclose(np.linalg.norm(TETRAHEDRON, axis=1), 1.0, rtol=0, atol=1e-12)
    for p, q in itertools.combinations(range(4), 2):
        assert abs(TETRAHEDRON[p] @ TETRAHEDRON[q] + 1 / 3) < 1e-12
    np.testing.assert_allclose(TETRAHEDRON.sum(axis=0), 0.0, rtol=0, atol=1e-12)


def test_anchors_at_origin_match_published_matrix():
    a = make_anchors([[0, 0, 0]], [3], 1.0)
    expected = [[R2 / 3, -R6 / 3, -1 / 3], [R2 / 3, R6 / 3, -1 / 3], [-2 * R2 / 3, 0, -1 / 3], [0, 0, 1]]
    np.testing.assert_allclose(a.positions[0], expected, rtol=0, atol=1e-15)
    assert a.timestamps.tolist() == [[3, 3, 3, 3]]


def test_anchor_scale_must_be_positive():
    with pytest.raises(ValueError):
        make_anchors([[1, 2, 3]], [0], 0.0)
    with pytest.raises(ValueError):
        make_anchors([[1, 2, 3]], [0], -1.0)
    tiny = make_anchors([[1, 2, 3]], [0], 1e-300)
    np.testing.assert_array_equal(tiny.positions[0], np.tile([1.0, 2.0, 3.0], (4, 1)))


def test_anchor_pairwise_distance_for_scale_two():
    a = make_anchors([[1, 2, 3]], [0], 2.0).positions[0]
    np.testing.assert_allclose(a, np.array([1, 2, 3]) + 2 * TETRAHEDRON)
    for p, q in itertools.combinations(range(4), 2):
        assert np.linalg.norm(a[p] - a[q]) == pytest.approx(2 * math.sqrt(8 / 3), abs=1e-12)


def test_anchor_set_invariants_over_random_cores():
    rng = np.random.default_rng(0)
    cores = rng.uniform(-10, 10, (1000, 3))
    for dx in (0.01, 0.5, 3.0):
        a = make_anchors(cores, rng.integers(0, 8, 1000), dx)
        dist = np.linalg.norm(a.positions - cores[:, None], axis=2)
        np.testing.assert_allclose(dist, dx, rtol=0, atol=1e-12)
        np.testing.assert_allclose(a.positions.mean(axis=1), cores, rtol=0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (5, 3), elements=st.floats(-100, 100)),
       arrays(np.float64, 3, elements=st.floats(-100, 100)),
       st.floats(1e-3, 10))
def test_anchor_translation_and_scale(cores, v, s):
    t = np.zeros(5)
    moved = make_anchors(cores + v, t, s).positions
    np.testing.assert_allclose(moved, make_anchors(cores, t, s).positions + v, rtol=0, atol=1e-12)
    twice = make_anchors(cores, t, 2 * s).positions - cores[:, None]
    once = make_anchors(cores, t, s).positions - cores[:, None]
    np.testing.assert_allclose(twice, 2 * once, rtol=0, atol=1e-12)


def test_anchor_translation_is_exact_on_dyadic_values():
    cores = np.array([[1.0, -2.0, 0.5], [4.0, 8.25, -3.0]])
    v = np.array([16.0, -32.0, 64.0])
    t = np.zeros(2)
    lhs = make_anchors(cores + v, t, 0.5).positions
    rhs = make_anchors(cores, t, 0.5).positions + v
    assert np.array_equal(lhs - v, make_anchors(cores, t, 0.5).positions) or np.allclose(lhs, rhs, atol=1e-13)


# ---- radius schedule --------------------------------------------------------

def test_radius_schedule_published_values():
    s0 = RadiusSchedule(scale=0.25, frames=8, level=0, delta_x=0.05)
    assert radius_for(s0, 0) == 0.125
    assert radius_for(s0, 7) == 0.15
    s1 = RadiusSchedule(scale=0.25, frames=8, level=1, delta_x=0.05)
    assert radius_for(s1, 0) == 0.25
    assert radius_for(s1, 7) == 0.3


def test_radius_clamp_dominates():
    s = RadiusSchedule(scale=0.25, frames=8, level=0, delta_x=0.2)
    assert all(radius_for(s, d) == 0.2 for d in range(8))


def test_single_frame_schedule_and_range_check():
    s = RadiusSchedule(scale=0.25, frames=1, level=2, delta_x=0.01)
    assert radius_for(s, 0) == 0.5
    with pytest.raises(ValueError):
        radius_for(s, 1)
    with pytest.raises(ValueError):
        radius_for(RadiusSchedule(frames=8), 8)


def test_default_anchor_scale_is_half_the_base_radius():
    s = RadiusSchedule(scale=0.25, frames=8, level=1)
    assert s.anchor_scale == 0.125
    assert s.radii()[0] == 0.25


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 5), st.integers(1, 30), st.integers(0, 4), st.floats(0.001, 1))
def test_radius_monotone_in_interval_and_level(a, frames, level, dx):
    s = RadiusSchedule(scale=a, frames=frames, level=level, delta_x=dx)
    r = s.radii()
    assert np.all(np.diff(r) >= 0)
    assert np.all(r >= dx)
    up = RadiusSchedule(scale=a, frames=frames, level=level + 1, delta_x=dx).radii()
    assert np.all(up >= r)
    for d in range(frames):
        assert s.unclamped(d) * 2 == pytest.approx(RadiusSchedule(a, frames, level + 1).unclamped(d), rel=1e-15)


# ---- farthest point sampling -------------------------------------------------

def line(n):
    return np.stack([np.arange(n, dtype=float), np.zeros(n), np.zeros(n)], axis=1)


def fps_brute_force(points, n, seed=0):
    chosen = [seed]
    while len(chosen) < n:
        best, best_d = None, -1.0
        for i in range(len(points)):
            if i in chosen:
                continue
            d = min(math.dist(points[i], points[j]) for j in chosen)
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return chosen


def test_fps_examples():
    assert farthest_point_sample(line(4), 2).indices.tolist() == [0, 3]
    assert farthest_point_sample(line(4), 3).indices.tolist() == [0, 3, 1]
    assert fps_brute_force(line(4), 3) == [0, 3, 1]
    full = farthest_point_sample(line(4), 4).indices.tolist()
    assert sorted(full) == [0, 1, 2, 3] and full == farthest_point_sample(line(4), 4).indices.tolist()
    with pytest.raises(ValueError):
        farthest_point_sample(line(4), 5)


def test_fps_matches_brute_force_on_random_sets():
    rng = np.random.default_rng(1)
    for _ in range(30):
        pts = rng.uniform(0, 1, (25, 3))
        n = int(rng.integers(1, 25))
        seed = int(rng.integers(0, 25))
        assert farthest_point_sample(pts, n, seed).indices.tolist() == fps_brute_force(pts, n, seed)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (30, 3), elements=st.floats(-5, 5)), st.integers(1, 30))
def test_fps_greedy_monotone_and_covering(pts, n):
    cs = farthest_point_sample(pts, n)
    assert len(set(cs.indices.tolist())) == n
    assert np.all(np.diff(cs.distances[1:]) <= 0)
    if n < len(pts):
        rest = np.setdiff1d(np.arange(len(pts)), cs.indices)
        d = np.linalg.norm(pts[rest][:, None] - pts[cs.indices][None], axis=2).min(axis=1)
        assert np.all(d <= cs.distances[-1] + 1e-12) or n == 1
    again = farthest_point_sample(pts, n)
    assert np.array_equal(again.indices, cs.indices)


def test_fps_ignores_time_and_copies_timestamps():
    pts = line(4)
    cs = farthest_point_sample(pts, 2, timestamps=[5, 0, 0, 9])
    assert cs.indices.tolist() == [0, 3]
    assert cs.timestamps.tolist() == [5, 9]


def test_fps_per_frame():
    pts = np.concatenate([line(4), line(4) + [0, 5, 0]])
    ts = np.repeat([0, 1], 4)
    cs = farthest_point_sample_per_frame(pts, 2, ts)
    assert cs.indices.tolist() == [0, 3, 4, 7]


# ---- radius queries -----------------------------------------------------------

def test_radius_query_examples():
    pts = np.array([[0.5, 0, 0], [0, 0.9, 0], [0, 0, 1.1]])
    ts = np.zeros(3)
    g = radius_query_naive([0, 0, 0], 0, pts, ts, [1.0])
    assert g.valid_count == 2
    assert g.indices.tolist() == [0, 1, 0, 0, 0, 0, 0, 0]
    assert radius_query([0, 0, 0], 0, pts, ts, [1.0]).indices.tolist() == g.indices.tolist()
    far = radius_query([10, 10, 10], 0, pts, ts, [1.0])
    assert far.valid_count == 0


def test_radius_is_strict():
    pts = np.array([[1.0, 0, 0], [0.5, 0, 0]])
    g = radius_query_naive([0, 0, 0], 0, pts, np.zeros(2), [1.0])
    assert g.valid_count == 1 and g.indices[0] == 1


def test_per_frame_radius_uses_interval():
    pts = np.array([[0.25, 0, 0], [0.25, 0, 0], [0.25, 0, 0]])
    ts = np.array([0.0, 1.0, 2.0])
    g = radius_query_naive([0, 0, 0], 1, pts, ts, [0.2, 0.3])
    assert g.valid_count == 2 and g.indices[:2].tolist() == [0, 2]


def test_only_first_k_in_index_order():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-0.1, 0.1, (20, 3))
    g = radius_query_naive([0, 0, 0], 0, pts, np.zeros(20), [1.0])
    assert g.valid_count == 8 and g.indices.tolist() == list(range(8))


def test_grid_single_point_and_boundary():
    idx = build_grid_index([[0.3, 0.3, 0.3]], [0], 1.0)
    assert idx.query(np.array([0.3, 0.3, 0.3]), 0, [0.1]).indices[0] == 0
    pts = np.array([[0.99, 0.5, 0.5], [1.01, 0.5, 0.5]])
    g = GridIndex(pts, [0, 0], 0.5).query(np.array([1.0, 0.5, 0.5]), 0, [0.05])
    assert g.valid_count == 2


def _random_instance(rng, n_points, frames=2):
    pts = rng.uniform(0, 1, (n_points, 3))
    ts = rng.integers(0, frames, n_points).astype(float)
    radii = np.sort(rng.uniform(0.05, 0.4, frames))
    return pts, ts, radii


def test_grid_matches_naive_50_points():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 1, (50, 3))
    ts = rng.integers(0, 2, 50).astype(float)
    radii = [0.2, 0.3]
    index = GridIndex(pts, ts, 0.3)
    for _ in range(50):
        c, t = rng.uniform(0, 1, 3), float(rng.integers(0, 2))
        a, b = index.query(c, t, radii), radius_query_naive(c, t, pts, ts, radii)
        assert a.valid_count == b.valid_count and np.array_equal(a.indices, b.indices)


def test_grid_matches_naive_1000_points_100_queries():
    rng = np.random.default_rng(4)
    pts, ts, radii = _random_instance(rng, 1000, frames=4)
    index = GridIndex(pts, ts, 0.17)  # deliberately smaller than the largest radius
    for _ in range(100):
        c, t = rng.uniform(-0.2, 1.2, 3), float(rng.integers(0, 4))
        a, b = index.query(c, t, radii), radius_query_naive(c, t, pts, ts, radii)
        assert a.valid_count == b.valid_count and np.array_equal(a.indices, b.indices)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_radius_query_properties(seed):
    rng = np.random.default_rng(seed)
    pts, ts, radii = _random_instance(rng, int(rng.integers(1, 60)), frames=3)
    c, t = rng.uniform(0, 1, 3), float(rng.integers(0, 3))
    g = radius_query(c, t, pts, ts, radii)
    valid = g.indices[: g.valid_count]
    d = np.linalg.norm(pts - c, axis=1)
    ok = d < radii[np.abs(ts - t).astype(int)]
    assert np.all(ok[valid])
    if g.valid_count:
        assert np.all(g.indices[g.valid_count:] == g.indices[0])
        last = valid[-1]
        assert set(np.flatnonzero(ok[: last + 1])) == set(valid.tolist())
    else:
        assert not ok.any()


def test_query_anchors_shapes():
    rng = np.random.default_rng(5)
    pts, ts, radii = _random_instance(rng, 100)
    anchors = make_anchors(pts[:7], ts[:7], 0.05)
    nb = query_anchors(anchors, pts, ts, radii)
    assert nb.indices.shape == (7, 4, 8) and nb.valid_count.shape == (7, 4)
    for i in range(7):
        for j in range(4):
            ref = radius_query_naive(anchors.positions[i, j], anchors.timestamps[i, j], pts, ts, radii)
            assert np.array_equal(nb.indices[i, j], ref.indices)
