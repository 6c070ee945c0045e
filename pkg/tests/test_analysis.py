from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bryantforge import analysis as an
from bryantforge import bryant_data as bd
from bryantforge import meromorphic as mm
from bryantforge.grids import LogPolarChart, RectChart

HOROSPHERE = bd.BryantData(g=mm.constant_map(0.0), f=mm.constant_map(1.0),
                           punctures=(mm.INF,))
ENNEPER = bd.BryantData(g=mm.identity_map(), f=mm.constant_map(1.0),
                        punctures=(mm.INF,))
CATENOID_DUAL = bd.BryantData(
    g=mm.PowerRational(0.0, [0.0, 0.0, 1.0]),
    f=mm.PowerRational(0.0, [-0.375], [0.0, 0.0, 0.0, 1.0]),
    punctures=(0.0, mm.INF))


@pytest.fixture(scope="module")
def flat_grid():
    chart = RectChart(-2.0, 2.0, -2.0, 2.0, nx=257, ny=257)
    return an.metric_grid(HOROSPHERE, chart)


@pytest.fixture(scope="module")
def flat_rho(flat_grid):
    return an.geodesic_distance(flat_grid, 0.0)


@pytest.fixture(scope="module")
def enneper_wide():
    chart = RectChart(-8.0, 8.0, -8.0, 8.0, nx=257, ny=257)
    grid = an.metric_grid(ENNEPER, chart)
    rho = an.geodesic_distance(grid, 0.0)
    return grid, rho


def _end_pipeline(data, puncture, r_inner, r_outer):
    chart = an.end_band_chart(puncture, r_inner, r_outer)
    grid = an.metric_grid(data, chart)
    rho = an.ring_distance(grid)
    kappa = np.asarray(bd.gauss_curvature(data, chart.nodes()))
    end = an.bounded_end_expansion(data, puncture)
    return an.curvature_decay_fit(kappa[grid.mask], rho[grid.mask], end), \
        kappa[grid.mask], rho[grid.mask]


# -- grids ------------------------------------------------------------------


def test_metric_grid_shape_checks():
    chart = RectChart(-1.0, 1.0, -1.0, 1.0, nx=9, ny=9)
    with pytest.raises(ValueError):
        an.MetricGrid(chart, np.ones((9, 8)), np.ones((9, 9), dtype=bool))
    bad = np.ones((9, 9))
    bad[4, 4] = 0.0
    with pytest.raises(ValueError):
        an.MetricGrid(chart, bad, np.ones((9, 9), dtype=bool))


def test_metric_grid_masks_degenerate_ring():
    data = bd.BryantData(g=mm.identity_map(), f=mm.constant_map(1.0),
                         punctures=(mm.INF,), target=bd.Target.DE_SITTER)
    chart = RectChart(-2.0, 2.0, -2.0, 2.0, nx=257, ny=257)
    grid = an.metric_grid(data, chart)
    # |g| = 1 exactly at the node z = 1
    assert not grid.mask[128, 192]
    assert grid.mask.mean() > 0.9


# -- geodesic distance ------------------------------------------------------


def test_flat_distance_eight_neighbor_bound(flat_grid):
    rho = an.geodesic_distance(flat_grid, 0.0, neighbors=8)
    z = flat_grid.nodes
    away = np.abs(z) > 0.3
    rel = (rho - np.abs(z))[away] / np.abs(z)[away]
    assert rel.min() >= -1e-9
    assert rel.max() <= 0.0825
    assert rho[128, 192] == pytest.approx(1.0, rel=1e-9)


def test_flat_distance_default_stencil(flat_grid, flat_rho):
    z = flat_grid.nodes
    away = np.abs(z) > 0.3
    rel = (flat_rho - np.abs(z))[away] / np.abs(z)[away]
    assert rel.min() >= -1e-9
    assert rel.max() <= 0.015


def test_curved_radial_distance():
    chart = RectChart(-2.0, 2.0, -2.0, 2.0, nx=257, ny=257)
    grid = an.metric_grid(ENNEPER, chart)
    rho = an.geodesic_distance(grid, 0.0)
    # int_0^1 (1+s^2) ds
    assert rho[128, 192] == pytest.approx(4.0 / 3.0, rel=0.08)
    assert rho[128, 192] == pytest.approx(4.0 / 3.0, rel=1e-3)


def test_triangle_inequality(flat_grid, flat_rho):
    rng = np.random.default_rng(7)
    b = (37, 181)
    rho_b = an.geodesic_distance(flat_grid, b)
    for _ in range(50):
        i = int(rng.integers(0, 257))
        j = int(rng.integers(0, 257))
        assert flat_rho[i, j] <= flat_rho[b] + rho_b[i, j] + 1e-9


def test_disconnected_mask_gives_inf():
    chart = RectChart(-1.0, 1.0, -1.0, 1.0, nx=33, ny=33)
    mask = np.ones((33, 33), dtype=bool)
    mask[:, 16] = False
    grid = an.MetricGrid(chart, np.ones((33, 33)), mask)
    rho = an.geodesic_distance(grid, (16, 4))
    assert np.isfinite(rho[16, 4])
    assert np.isinf(rho[16, 28])
    with pytest.raises(ValueError):
        an.geodesic_distance(grid, (16, 16))


def test_multi_source_is_pointwise_min(flat_grid):
    a, b = (60, 60), (200, 190)
    ra = an.geodesic_distance(flat_grid, a)
    rb = an.geodesic_distance(flat_grid, b)
    both = an.geodesic_distance(flat_grid, [a, b])
    assert np.allclose(both, np.minimum(ra, rb))


def test_distance_refinement_stability():
    vals = {}
    for n in (65, 129):
        chart = RectChart(-2.0, 2.0, -2.0, 2.0, nx=n, ny=n)
        grid = an.metric_grid(ENNEPER, chart)
        rho = an.geodesic_distance(grid, 0.0)
        mid = n // 2
        vals[n] = rho[mid, mid + (n - 1) // 4]   # z = 1
    assert abs(vals[129] - vals[65]) <= 0.05 * vals[65]


def test_periodic_chart_wraps_the_seam():
    chart = LogPolarChart(0.0, -0.5, 0.5, theta0=0.0, theta1=2.0 * math.pi,
                          n_rho=17, n_theta=64, periodic=True)
    z = chart.nodes()
    grid = an.MetricGrid(chart, 1.0 / np.abs(z), np.ones(chart.shape, bool))
    rho = an.geodesic_distance(grid, (8, 0))
    # last column is one angular step from the seam, not a full turn away
    step = 2.0 * math.pi / 64
    assert rho[8, 63] < 2.0 * step
    assert abs(rho[8, 32] - math.pi) <= 0.02 * math.pi


# -- volume growth ----------------------------------------------------------


def test_flat_ball_volumes(flat_grid, flat_rho):
    vg = an.volume_growth(flat_grid, flat_rho, np.geomspace(0.15, 1.9, 20))
    rel = np.abs(vg.volumes - math.pi * vg.radii ** 2) / (math.pi * vg.radii ** 2)
    assert rel.max() <= 0.03
    assert vg.exponent == pytest.approx(2.0, abs=0.1)
    assert np.all(np.diff(vg.volumes) >= 0.0)
    assert vg.volumes[-1] <= vg.bound * vg.radii[-1] ** 2 + 1e-9


def test_volume_guard_drops_untrusted_radii(flat_grid, flat_rho):
    with pytest.warns(UserWarning):
        vg = an.volume_growth(flat_grid, flat_rho, [0.5, 1.0, 50.0])
    assert vg.radii.tolist() == [0.5, 1.0]
    with pytest.raises(ValueError):
        with pytest.warns(UserWarning):
            an.volume_growth(flat_grid, flat_rho, [50.0, 60.0, 70.0])


def test_enneper_growth_exponent(enneper_wide):
    grid, rho = enneper_wide
    vg = an.volume_growth(grid, rho, np.geomspace(2.0, 170.0, 24))
    assert 1.8 <= vg.exponent <= 2.2


def test_two_ended_growth_exponent():
    chart = LogPolarChart(0.0, math.log(0.01), math.log(100.0),
                          theta0=0.0, theta1=2.0 * math.pi,
                          n_rho=257, n_theta=128, periodic=True)
    grid = an.metric_grid(CATENOID_DUAL, chart)
    rho = an.geodesic_distance(grid, 1.0)
    vg = an.volume_growth(grid, rho, np.geomspace(1.0, 1700.0, 30))
    assert 1.8 <= vg.exponent <= 2.2
    assert np.all(np.diff(vg.volumes) >= 0.0)


# -- total curvature --------------------------------------------------------


def test_total_curvature_flat_is_zero(flat_grid):
    radii = np.geomspace(0.3, 1.9, 8)
    assert an.total_curvature(flat_grid, np.zeros((257, 257)), radii) == 0.0


def test_total_curvature_enneper(enneper_wide):
    grid, _ = enneper_wide
    kappa = np.asarray(bd.gauss_curvature(ENNEPER, grid.nodes))
    val = an.total_curvature(grid, kappa, np.geomspace(1.0, 7.9, 14))
    assert val == pytest.approx(4.0 * math.pi, rel=0.02)


def test_total_curvature_degree_two():
    data = bd.BryantData(g=mm.PowerRational(0.0, [0.0, 0.0, 1.0]),
                         f=mm.constant_map(1.0), punctures=(mm.INF,))
    chart = RectChart(-8.0, 8.0, -8.0, 8.0, nx=257, ny=257)
    grid = an.metric_grid(data, chart)
    kappa = np.asarray(bd.gauss_curvature(data, chart.nodes()))
    val = an.total_curvature(grid, kappa, np.geomspace(1.0, 7.9, 14))
    assert val == pytest.approx(8.0 * math.pi, rel=0.02)


def test_total_curvature_rejects_positive_kappa(flat_grid):
    kappa = np.full((257, 257), 0.5)
    with pytest.raises(ValueError):
        an.total_curvature(flat_grid, kappa, [0.5, 1.0])


def test_total_curvature_flags_divergence(flat_grid):
    kappa = np.full((257, 257), -1.0)
    val = an.total_curvature(flat_grid, kappa, np.geomspace(0.2, 1.9, 10))
    assert val == math.inf


# -- curvature decay --------------------------------------------------------


def test_bounded_end_invariants():
    e = an.bounded_end_expansion(ENNEPER, mm.INF)
    assert (e.beta, e.big_i) == (0.0, 3.0)
    e0 = an.bounded_end_expansion(CATENOID_DUAL, 0.0)
    assert (e0.beta, e0.big_i) == (1.0, 2.0)
    einf = an.bounded_end_expansion(CATENOID_DUAL, mm.INF)
    assert (einf.beta, einf.big_i) == (1.0, 2.0)


@pytest.mark.parametrize("data,puncture,r_in,r_out", [
    (ENNEPER, mm.INF, 2.0, 200.0),
    (CATENOID_DUAL, 0.0, 0.005, 0.5),
    (CATENOID_DUAL, mm.INF, 2.0, 200.0),
])
def test_decay_fit_matches_prediction(data, puncture, r_in, r_out):
    fit, kappa, rho = _end_pipeline(data, puncture, r_in, r_out)
    assert fit.has_prediction
    assert fit.slope <= -2.0
    assert abs(fit.slope - fit.predicted_slope) <= 0.15 * abs(fit.predicted_slope)
    tail = rho >= fit.r0
    bound = fit.c / rho[tail] ** (2.0 + fit.epsilon)
    assert np.all(kappa[tail] <= 1e-12)
    assert np.all(-kappa[tail] <= bound * (1.0 + 1e-9))
    assert math.isfinite(an.integrability_check(fit.c, fit.epsilon, fit.r0))


def test_decay_fit_envelope_without_prediction():
    data = bd.BryantData(g=mm.PowerRational(0.0, [1.0], [0.0, 1.0]),
                         f=mm.PowerRational(0.0, [0.0, 0.0, 1.0]),
                         punctures=(0.0, mm.INF))
    fit, kappa, rho = _end_pipeline(data, 0.0, 0.005, 0.5)
    assert not fit.has_prediction
    tail = rho >= fit.r0
    assert np.all(-kappa[tail] <= fit.c / rho[tail] ** (2.0 + fit.epsilon)
                  * (1.0 + 1e-9))


def test_decay_fit_flat_tail():
    rho = np.geomspace(1.0, 100.0, 50)
    end = an.bounded_end_expansion(HOROSPHERE, mm.INF)
    fit = an.curvature_decay_fit(np.zeros(50), rho, end)
    assert fit.c == 0.0 and fit.epsilon == math.inf
    assert an.integrability_check(fit.c, 1.0, fit.r0, kappa0=2.0) == \
        pytest.approx(fit.r0 ** 2)


def test_decay_fit_rejects_positive_kappa():
    end = an.bounded_end_expansion(ENNEPER, mm.INF)
    with pytest.raises(ValueError):
        an.curvature_decay_fit([0.5], [1.0, 2.0][:1], end)


def test_integrability_values():
    assert an.integrability_check(0.0, 2.0, 3.0, kappa0=4.0) == 18.0
    assert an.integrability_check(1.0, 1.0, 1.0) == 1.0
    assert an.integrability_check(1.0, -0.5, 1.0) == math.inf
    with pytest.raises(ValueError):
        an.integrability_check(-1.0, 1.0, 1.0)


# -- parabolicity -----------------------------------------------------------


def test_parabolicity_flat_closed_form():
    r = np.geomspace(1.0, 100.0, 60)
    rep = an.parabolicity_integral(r, math.pi * r ** 2)
    assert rep.slope == pytest.approx(1.0 / math.pi, rel=0.05)
    assert rep.verdict == "divergent"


def test_parabolicity_cubic_volume_is_inconclusive():
    r = np.geomspace(1.0, 100.0, 60)
    rep = an.parabolicity_integral(r, r ** 3)
    assert rep.verdict == "non-divergent"
    assert not rep.divergent


def test_parabolicity_drops_zero_volumes():
    r = np.array([0.5, 1.0, 2.0, 4.0, 8.0])
    v = np.array([0.0, math.pi, 4 * math.pi, 16 * math.pi, 64 * math.pi])
    rep = an.parabolicity_integral(r, v)
    assert rep.radii[0] == 1.0
    with pytest.raises(ValueError):
        an.parabolicity_integral([2.0, 1.0, 3.0], [1.0, 2.0, 3.0])


def test_parabolicity_matches_volume_fit(enneper_wide):
    grid, rho = enneper_wide
    vg = an.volume_growth(grid, rho, np.geomspace(2.0, 170.0, 40))
    rep = an.parabolicity_integral(vg.radii, vg.volumes,
                                   r0=vg.radii[-1] / 10.0)
    assert rep.verdict == "divergent"
    expected = 1.0 / vg.coefficient
    assert abs(rep.slope - expected) <= 0.25 * expected


@given(st.floats(min_value=0.5, max_value=4.0),
       st.lists(st.floats(min_value=0.3, max_value=1.0),
                min_size=8, max_size=8))
@settings(max_examples=30, deadline=None)
def test_parabolicity_quadratic_bound_slope(c, dips):
    # vol <= c r^2 everywhere forces slope >= 1/(2c)
    r = np.geomspace(1.0, 50.0, 8)
    vol = c * r ** 2 * np.array(dips)
    rep = an.parabolicity_integral(r, vol)
    assert rep.slope >= 1.0 / (2.0 * c)
