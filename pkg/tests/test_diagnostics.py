import math

import numpy as np
import pytest

from princurve import diagnostics as dg
from princurve.distributions import PointSource
from princurve.geometry import PolygonalCurve


def circle(radius, n, centre=(0.0, 0.0)):
    ang = 2 * np.pi * np.arange(n) / n
    return PolygonalCurve(np.asarray(centre) + radius * np.column_stack([np.cos(ang), np.sin(ang)]), "closed")


@pytest.fixture(scope="module")
def oned():
    x = PointSource.uniform_1d(seed=11).sample(40000)
    return PolygonalCurve(np.linspace(0.25, 0.75, 16)[:, None]), x


# ---------------------------------------------------------------- multiplier


def test_lambda_on_optimal_segment(oned):
    curve, x = oned
    lam, se = dg.estimate_lambda(curve, x, 0.5)
    assert abs(lam - 1 / 16) <= 3 * se
    lam_k, se_k = dg.kkt_lambda(curve, x)
    assert abs(lam_k - 1 / 16) <= 3 * se_k + 1e-3


def test_lambda_for_half_radius_circle():
    x = PointSource.uniform_circle(1.0, seed=2).sample(20000)
    lam, se = dg.estimate_lambda(circle(0.5, 512), x, math.pi)
    # every residual is 0.5 long and parallel to the foot, which sits 0.5 from the centre
    assert lam == pytest.approx(0.25 / math.pi**2, rel=1e-3)
    assert se < 1e-3


def test_lambda_rotation_invariant():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(8, 2))
    x = rng.normal(size=(2000, 2))
    c, s = math.cos(0.7), math.sin(0.7)
    rot = np.array([[c, -s], [s, c]])
    a = dg.estimate_lambda(PolygonalCurve(v), x)[0]
    b = dg.estimate_lambda(PolygonalCurve(v @ rot.T), x @ rot.T)[0]
    assert b == pytest.approx(a, rel=1e-10)
    shifted = dg.estimate_lambda(PolygonalCurve(v + 5.0), x + 5.0)[0]
    assert shifted == pytest.approx(a, rel=1e-9)


def test_lambda_rejects_point_curve():
    with pytest.raises(ValueError):
        dg.estimate_lambda(PolygonalCurve([[0.0, 0.0], [0.0, 0.0]]), [[1.0, 1.0]])


# ---------------------------------------------------------------- first order


def test_basis_is_periodic_when_closed():
    names = [n for n, _, _ in dg.test_functions(2, True)]
    assert names == ["const", "cos1", "sin1", "cos2", "sin2"]
    ks = [k for _, k, _ in dg.test_functions(2, True)]
    assert ks == [0, 2.0, 2.0, 4.0, 4.0]


def test_const_residual_is_mean_gap():
    rng = np.random.default_rng(3)
    curve = PolygonalCurve(rng.normal(size=(6, 2)))
    x = rng.normal(size=(500, 2))
    res = {r.name: r for r in dg.first_order_residual(curve, x)}
    gap, _ = dg.mean_gap(curve, x)
    assert res["const[0]"].residual == pytest.approx(gap[0], abs=1e-15)
    assert res["const[1]"].residual == pytest.approx(gap[1], abs=1e-15)


def test_first_order_small_at_optimum_and_large_off_it(oned):
    curve, x = oned
    worst = max(r.z for r in dg.first_order_residual(curve, x, K=4, length=0.5))
    assert worst <= 4
    off = PolygonalCurve(curve.vertices + 0.05)
    assert max(r.z for r in dg.first_order_residual(off, x, K=4, length=0.5)) > 10


def test_residual_z_edge_cases():
    assert dg.Residual("g", 0.0, 0.0).z == 0.0
    assert dg.Residual("g", 1.0, 0.0).z == math.inf
    assert dg.Residual("g", -2.0, 0.5).z == 4.0


# ---------------------------------------------------------------- atoms


def test_atom_partition_sums_to_one():
    rng = np.random.default_rng(5)
    curve = PolygonalCurve(rng.uniform(size=(7, 2)))
    x = rng.uniform(-0.5, 1.5, size=(3000, 2))
    a = dg.atom_masses(curve, x)
    assert sum(a.endpoint) + a.knot_masses.sum() + a.continuous == pytest.approx(1.0, abs=1e-12)


def test_endpoint_masses_on_uniform_line(oned):
    curve, x = oned
    a = dg.atom_masses(curve, x)
    for p in a.endpoint:
        assert abs(p - 0.25) <= 3 * a.std_error(0.25)
    assert np.all(a.knot_masses == 0)


def test_corner_carries_mass():
    curve = PolygonalCurve([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    x = PointSource.uniform_square(seed=1).sample(20000) + np.array([0.5, -0.5])
    a = dg.atom_masses(curve, x)
    # the quadrant beyond the corner projects onto it
    assert a.knot_masses[0] > 0.1
    assert a.turning[0] == pytest.approx(math.pi / 2)


def test_closed_curve_has_no_endpoints():
    a = dg.atom_masses(circle(1.0, 8), PointSource.gaussian(2, seed=1).sample(1000))
    assert a.endpoint is None and a.knot_masses.shape == (8,)


# ---------------------------------------------------------------- self-consistency


def test_endpoint_bin_gap_on_uniform_line(oned):
    curve, x = oned
    prof = dg.self_consistency_profile(curve, x, 16)
    # first bin: the atom at 0.25 (mass 1/4, conditional mean 1/8) plus the interior slice [0.25, 0.28125]
    expected = 0.25 * 0.125 / (0.25 + 0.5 / 16)
    assert abs(prof.gaps[0] - expected) <= 3 * prof.std_errors[0]
    assert abs(prof.gaps[-1] - expected) <= 3 * prof.std_errors[-1]
    assert prof.worst in (0, 15)
    assert np.all(prof.gaps[1:-1] <= 0.01)


def test_gap_zero_for_points_on_curve():
    curve = PolygonalCurve([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    t = np.linspace(0, 1, 200)
    x = np.array([curve.point_at(s) for s in t])
    assert dg.self_consistency_gap(curve, x, 8) <= 1e-12


def test_empty_bins_reported():
    curve = PolygonalCurve([[0.0, 0.0], [1.0, 0.0]])
    prof = dg.self_consistency_profile(curve, [[0.1, 1.0], [0.12, -1.0]], 4)
    assert prof.empty_bins == [1, 2, 3]
    with pytest.raises(ValueError):
        dg.self_consistency_profile(curve, [[0.1, 1.0]], 1)


# ---------------------------------------------------------------- ambiguity


TAUS = (1e-12, 1e-8, 1e-4, 1e-2)


def test_segment_has_no_ambiguity():
    curve = PolygonalCurve(np.linspace(0, 1, 10)[:, None] * np.array([[1.0, 0.0]]))
    x = PointSource.uniform_square(seed=3).sample(2000)
    assert all(f == 0.0 for _, f in dg.ambiguity_fraction(curve, x, TAUS))


def test_centre_atom_is_ambiguous():
    x = PointSource.atom_circle_mixture(0.25, seed=4).sample(20000)
    fracs = dg.ambiguity_fraction(circle(0.5, 64), x, TAUS)
    atom = np.mean(np.all(x == 0, axis=1))
    assert all(f >= atom for _, f in fracs)
    assert atom > 0.2
    values = [f for _, f in fracs]
    assert values == sorted(values)


def test_ambiguity_rejects_bad_tolerances():
    curve = PolygonalCurve([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ValueError):
        dg.ambiguity_fraction(curve, [[0.0, 1.0]], [1e-2, 1e-4])
    with pytest.raises(ValueError):
        dg.ambiguity_fraction(curve, [[0.0, 1.0]], [0.0])


# ---------------------------------------------------------------- report


def test_report_flags_self_crossing():
    bowtie = PolygonalCurve([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]], "closed")
    rep = dg.full_report(bowtie, PointSource.uniform_square(seed=1).sample(2000))
    assert rep.injective is False
    assert rep.check("injective")["pass"] is False
    assert len(rep.crossings) == 1
    np.testing.assert_allclose(rep.crossings[0]["point"], [0.5, 0.5])


def test_report_skips_injectivity_off_the_plane(oned):
    curve, x = oned
    rep = dg.full_report(curve, x, dg.ReportConfig(length=0.5))
    assert rep.injective is None and rep.check("injective")["pass"] is None
    assert any("injectivity check skipped" in n for n in rep.notes)


def test_report_on_optimal_segment(oned):
    curve, x = oned
    rep = dg.full_report(curve, x, dg.ReportConfig(length=0.5))
    for name in ("length_saturated", "constant_speed", "finite_curvature", "mean_match", "first_order",
                 "lambda_positive", "lambda_agreement", "endpoint_atoms", "lacks_self_consistency"):
        assert rep.check(name)["pass"] is True, name
    d = rep.to_dict()
    assert d["speed"]["min"] == pytest.approx(0.5)
    assert sum(d["t_hat_histogram"]) == pytest.approx(1.0)


def test_report_degenerate_when_distortion_vanishes():
    curve = PolygonalCurve([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]])
    rep = dg.full_report(curve, [[0.0, 0.0], [1.0, 0.0]], dg.ReportConfig(length=1.0))
    assert rep.degenerate
    for name in ("lambda_positive", "lambda_agreement", "endpoint_atoms", "lacks_self_consistency"):
        assert rep.check(name)["pass"] is None
    with pytest.raises(KeyError):
        rep.check("nope")


def test_report_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        dg.full_report(PolygonalCurve([[0.0, 0.0], [1.0, 0.0]]), np.zeros((3, 3)))
