import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from princurve.geometry import (
    PolygonalCurve,
    Topology,
    crofton_length,
    curve_length,
    load_curve,
    nearest_vertices,
    project_point,
    project_points,
    project_to_vertices,
    resample_uniform,
    save_curve,
    second_difference_measure,
    self_intersections,
    speed_profile,
    tangency_candidates,
    turning_angles,
)

SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]


def grid_positions(vertices, closed, ts):
    """Independent parameterization: piecewise-linear interpolation on uniform knots."""
    v = np.asarray(vertices, dtype=float)
    if closed:
        v = np.vstack([v, v[:1]])
    knots = np.linspace(0.0, 1.0, v.shape[0])
    return np.column_stack([np.interp(ts, knots, v[:, j]) for j in range(v.shape[1])])


def grid_argmin(vertices, closed, x, m=10**6):
    ts = np.linspace(0.0, 1.0, m + 1)
    if closed:
        ts = ts[:-1]  # t = 1 is t = 0
    pos = grid_positions(vertices, closed, ts)
    d2 = np.sum((pos - np.asarray(x)) ** 2, axis=1)
    best = d2.min()
    return ts[np.flatnonzero(d2 <= best * (1 + 1e-12) + 1e-15).max()], best


# ---------------------------------------------------------------- curves and lengths


def test_curve_length_examples():
    assert curve_length(PolygonalCurve([(0, 0), (1, 0)])) == 1.0
    assert curve_length(PolygonalCurve(SQUARE, "closed")) == 4.0
    assert curve_length(PolygonalCurve([(0, 0), (3, 4)])) == 5.0


def test_knots_open_and_closed():
    np.testing.assert_allclose(PolygonalCurve([(0,), (1,), (2,)]).knots, [0, 0.5, 1])
    np.testing.assert_allclose(PolygonalCurve(SQUARE, "closed").knots, [0, 0.25, 0.5, 0.75])


def test_invalid_curves_rejected():
    with pytest.raises(ValueError):
        PolygonalCurve([(0, 0)])
    with pytest.raises(ValueError):
        PolygonalCurve([(0, 0), (np.nan, 1)])


def test_curve_json_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    curve = PolygonalCurve(rng.normal(size=(7, 3)) * 1e3, "closed")
    path = tmp_path / "c.json"
    save_curve(curve, path)
    back = load_curve(path)
    assert back.topology is Topology.CLOSED
    np.testing.assert_allclose(back.vertices, curve.vertices, rtol=1e-15, atol=0)
    data = json.loads(path.read_text())
    assert set(data) == {"topology", "d", "vertices"}


@pytest.mark.parametrize("text", ["[]", '{"topology": "open"}', '{"topology": "spiral", "vertices": [[0],[1]]}',
                                  '{"topology": "open", "d": 2, "vertices": [[0],[1]]}', "not json"])
def test_malformed_curve_json(tmp_path, text):
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(ValueError, match="malformed"):
        load_curve(path)


def test_speed_profile_examples():
    np.testing.assert_allclose(speed_profile(PolygonalCurve([(0,), (0.5,), (1.0,)])), [1.0, 1.0])
    np.testing.assert_allclose(speed_profile(PolygonalCurve([(0,), (0.2,), (1.0,)])), [0.4, 1.6])


# ---------------------------------------------------------------- projection


def test_project_point_examples():
    seg = PolygonalCurve([(0, 0), (1, 0)])
    r = project_point(seg, (0.5, 1))
    assert r.t_hat == 0.5 and r.sq_dist == 1.0
    np.testing.assert_allclose(r.foot, (0.5, 0))
    r = project_point(seg, (2, 0.0))
    assert r.t_hat == 1.0 and r.sq_dist == 1.0
    np.testing.assert_allclose(r.foot, (1, 0))


def test_square_centre_takes_largest_parameter():
    sq = PolygonalCurve(SQUARE, "closed")
    r = project_point(sq, (0.5, 0.5))
    t_grid, _ = grid_argmin(SQUARE, True, (0.5, 0.5))
    # oracle: dense grid of 10^6 parameters, largest minimizer
    assert abs(t_grid - 0.875) < 1e-6
    assert r.t_hat == pytest.approx(0.875, abs=1e-12)
    np.testing.assert_allclose(r.foot, (0.0, 0.5), atol=1e-15)


def test_tie_between_segments_open():
    # equidistant from both arms of a V; the later segment wins
    v = PolygonalCurve([(-1, 1), (0, 0), (1, 1)])
    r = project_point(v, (0, 1))
    assert r.t_hat > 0.5


def test_zero_length_segment_projects_as_point():
    c = PolygonalCurve([(0, 0), (1, 0), (1, 0), (2, 0)])
    r = project_point(c, (1, 1))
    np.testing.assert_allclose(r.foot, (1, 0))
    assert r.sq_dist == 1.0


def test_project_to_vertices_examples():
    seg = PolygonalCurve([(0, 0), (1, 0)])
    assert project_to_vertices(seg, (0.4, 0)).t_hat == 0.0
    assert project_to_vertices(seg, (0.5, 0)).t_hat == 1.0
    three = PolygonalCurve([(0, 0), (1, 0), (2, 0)])
    r = project_to_vertices(three, (1.2, 3))
    assert r.segment_index == 1 or r.t_hat == 0.5
    assert r.t_hat == 0.5


def test_nearest_vertices_tree_matches_brute_force():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(40, 2))
    x = np.vstack([rng.normal(size=(3000, 2)), v[:10], 0.5 * (v[:5] + v[5:10])])
    idx, sq = nearest_vertices(v, x)
    d2 = np.sum((x[:, None, :] - v[None]) ** 2, axis=2)
    best = d2.min(axis=1)
    np.testing.assert_allclose(sq, best, rtol=1e-12, atol=1e-15)
    # ties resolved to the largest index
    expect = np.array([np.flatnonzero(row <= b * (1 + 1e-12) + 1e-300).max() for row, b in zip(d2, best)])
    np.testing.assert_array_equal(idx, expect)


def test_projection_is_chunk_and_thread_invariant(monkeypatch):
    rng = np.random.default_rng(2)
    c = PolygonalCurve(rng.normal(size=(30, 2)), "closed")
    x = rng.normal(size=(5000, 2))
    a = project_points(c, x)
    monkeypatch.setenv("PRINCURVE_THREADS", "4")
    b = project_points(c, x)
    np.testing.assert_array_equal(a.t_hat, b.t_hat)
    np.testing.assert_array_equal(a.sq_dist, b.sq_dist)


coords = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (6, 2), elements=coords), arrays(float, (2,), elements=coords), st.booleans())
def test_projection_dominates_vertices_and_matches_grid(verts, x, closed):
    curve = PolygonalCurve(verts, "closed" if closed else "open")
    r = project_point(curve, x)
    assert r.sq_dist <= np.min(np.sum((verts - x) ** 2, axis=1)) * (1 + 1e-12) + 1e-12
    np.testing.assert_allclose(np.sum((x - r.foot) ** 2), r.sq_dist, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(grid_positions(verts, closed, [r.t_hat])[0], r.foot, atol=1e-9)
    _, best = grid_argmin(verts, closed, x, m=20000)
    assert r.sq_dist <= best + 1e-12
    # grid resolution: parameter step times the fastest speed
    step = float(np.max(speed_profile(curve))) / 20000
    assert best - r.sq_dist <= 2 * step * math.sqrt(best) + step**2 + 1e-12


# ---------------------------------------------------------------- curvature measure


def test_second_difference_examples():
    m = second_difference_measure(PolygonalCurve([(0, 0), (0.5, 0), (1, 0)]))
    np.testing.assert_allclose(m.atoms, [(1, 0), (0, 0), (-1, 0)])
    np.testing.assert_allclose(m.total_mass, 0)
    m = second_difference_measure(PolygonalCurve([(0, 0), (1, 0), (1, 1)]))
    np.testing.assert_allclose(m.atoms[1], (-2, 2))
    with pytest.raises(ValueError):
        second_difference_measure(PolygonalCurve([(0, 0), (1, 0)]))


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.tuples(st.integers(3, 12), st.integers(1, 3)), elements=coords), st.booleans())
def test_measure_mass_and_boundary_atoms(verts, closed):
    curve = PolygonalCurve(verts, "closed" if closed else "open")
    meas = second_difference_measure(curve)
    assert np.max(np.abs(meas.total_mass)) <= 1e-9 * (1 + np.max(np.abs(verts))) * curve.n_segments
    assert math.isfinite(meas.total_variation)
    if not closed:
        m = curve.n - 1
        assert np.array_equal(meas.atoms[0], m * (verts[1] - verts[0]))
        assert np.array_equal(meas.atoms[-1], -m * (verts[-1] - verts[-2]))


def test_regular_polygon_turning_and_variation():
    n, r = 64, 0.5
    ang = 2 * np.pi * np.arange(n) / n
    poly = PolygonalCurve(r * np.column_stack([np.cos(ang), np.sin(ang)]), "closed")
    assert np.sum(turning_angles(poly)) == pytest.approx(2 * np.pi, rel=1e-12)
    # each atom has norm n * (chord) * 2 sin(pi / n); the speeds are all n * chord
    meas = second_difference_measure(poly)
    speed = n * 2 * r * math.sin(math.pi / n)
    assert meas.atom_norm_sum == pytest.approx(speed * 2 * n * math.sin(math.pi / n), rel=1e-12)


def _loop_then_tail(loop):
    """Open curve that runs around ``loop`` (back to its start) and then leaves."""
    loop = np.asarray(loop, dtype=float)
    tail = loop[0] + (loop[0] - loop[1])
    return PolygonalCurve(np.vstack([loop, loop[:1], tail[None]]))


@pytest.mark.parametrize("loop", [
    SQUARE,
    [(0, 0), (2, 0), (1, 1.5)],
    [(math.cos(a), math.sin(a)) for a in np.linspace(0, 2 * np.pi, 24, endpoint=False)],
])
def test_loop_curvature_bound(loop):
    curve = _loop_then_tail(loop)
    k = len(loop)
    # reparameterize by arc length so the speed is constant; the loop occupies (t_0, t_k]
    curve = resample_uniform(curve, 8 * curve.n)
    cum = np.concatenate([[0], np.cumsum(np.linalg.norm(np.diff(curve.vertices, axis=0), axis=1))])
    loop_len = sum(np.linalg.norm(np.roll(np.asarray(loop, float), -1, axis=0) - np.asarray(loop, float), axis=1))
    total = cum[-1]
    meas = second_difference_measure(curve)
    a, b = 0.0, loop_len / total
    speed = float(np.mean(speed_profile(curve)))
    assert meas.restrict(a - 1e-12, b + 1e-9).total_variation >= speed * (1 - 1e-6)
    assert k >= 3


# ---------------------------------------------------------------- resampling


def test_resample_examples():
    r = resample_uniform(PolygonalCurve([(0, 0), (1, 0)]), 5)
    np.testing.assert_allclose(r.vertices[:, 0], [0, 0.25, 0.5, 0.75, 1])
    r = resample_uniform(PolygonalCurve(SQUARE, "closed"), 4)
    np.testing.assert_allclose(r.vertices, SQUARE, atol=1e-15)
    r = resample_uniform(PolygonalCurve([(0, 0), (1, 0), (1, 1)]), 3)
    np.testing.assert_allclose(r.vertices, [(0, 0), (1, 0), (1, 1)], atol=1e-15)
    with pytest.raises(ValueError):
        resample_uniform(PolygonalCurve([(0, 0), (0, 0)]), 3)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (8, 2), elements=st.floats(-3, 3)), st.integers(4, 40))
def test_resample_never_lengthens(verts, m):
    curve = PolygonalCurve(verts)
    if curve_length(curve) < 1e-6:
        return
    assert curve_length(resample_uniform(curve, m)) <= curve_length(curve) * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 2 * np.pi), min_size=2, max_size=8), st.integers(1, 5))
def test_resample_constant_speed_when_corners_are_samples(headings, k):
    # equal unit segments: with m = k (n - 1) + 1 every corner is a sample point
    steps = np.column_stack([np.cos(headings), np.sin(headings)])
    verts = np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])
    r = resample_uniform(PolygonalCurve(verts), k * len(headings) + 1)
    sp = speed_profile(r)
    np.testing.assert_allclose(sp, sp[0], rtol=1e-9)


# ---------------------------------------------------------------- crofton


def test_crofton_segment_and_square():
    seg = PolygonalCurve([(-0.5, 0), (0.5, 0)])
    est = crofton_length(seg, 10**6, seed=11)
    assert abs(est - 1.0) <= 0.01
    sq = PolygonalCurve(SQUARE, "closed")
    est = crofton_length(sq, 10**6, seed=12)
    assert abs(est - 4.0) <= 0.05


def test_crofton_point_curve_is_zero():
    assert crofton_length(PolygonalCurve([(0.3, 0.2), (0.3, 0.2)]), 1000, seed=0) == 0.0


def test_crofton_deterministic_and_planar_only():
    c = PolygonalCurve([(0, 0), (0.3, 0.4), (0.1, 0.9)])
    assert crofton_length(c, 5000, 3) == crofton_length(c, 5000, 3)
    with pytest.raises(ValueError):
        crofton_length(PolygonalCurve([(0, 0, 0), (1, 0, 0)]), 10, 0)


# ---------------------------------------------------------------- injectivity


def test_x_shape_has_one_crossing():
    c = PolygonalCurve([(0, 0), (1, 1), (0, 1), (1, 0)])
    cr = self_intersections(c)
    assert len(cr) == 1
    assert (cr[0].first, cr[0].second) == (0, 2)
    np.testing.assert_allclose(cr[0].point, (0.5, 0.5))


def test_convex_square_is_simple():
    assert self_intersections(PolygonalCurve(SQUARE, "closed")) == []


def _brute_crossings(v):
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    out = 0
    for i in range(len(v) - 1):
        for j in range(i + 2, len(v) - 1):
            p1, p2, q1, q2 = v[i], v[i + 1], v[j], v[j + 1]
            if orient(p1, p2, q1) * orient(p1, p2, q2) < 0 and orient(q1, q2, p1) * orient(q1, q2, p2) < 0:
                out += 1
    return out


@settings(max_examples=60, deadline=None)
@given(arrays(int, (9, 2), elements=st.integers(0, 16)))
def test_crossings_match_all_pairs(grid):
    # dyadic coordinates keep every orientation exact
    verts = grid / 16.0
    assert len(self_intersections(PolygonalCurve(verts))) == _brute_crossings(verts)


@settings(max_examples=20, deadline=None)
@given(arrays(float, (12,), elements=st.floats(-1, 1)))
def test_monotone_arc_is_simple(ys):
    xs = np.arange(12, dtype=float)
    assert self_intersections(PolygonalCurve(np.column_stack([xs, ys]))) == []


def test_touching_is_reported_as_tangency_not_crossing():
    # the third segment touches the first at its midpoint without crossing it
    c = PolygonalCurve([(0, 0), (2, 0), (2, 1), (1, 0), (0.5, 1)])
    assert self_intersections(c) == []
    touches = tangency_candidates(c)
    assert any(i == 0 for i, _, _ in touches)


def test_injectivity_needs_plane():
    with pytest.raises(ValueError):
        self_intersections(PolygonalCurve([(0, 0, 0), (1, 0, 0), (0, 1, 1)]))
