from __future__ import annotations

import math

import numpy as np
import pytest

from bryantforge import bryant_data as bd
from bryantforge import meromorphic as mm
from bryantforge.grids import RectChart


def _rat(numer, denom=(1.0,)):
    return mm.PowerRational(0.0, numer, denom)


def _data(g, f, punctures, target=bd.Target.HYPERBOLIC):
    return bd.BryantData(g=g, f=f, punctures=tuple(punctures), target=target)


ENNEPER = _data(mm.identity_map(), mm.constant_map(1.0), (mm.INF,))
HOROSPHERE = _data(mm.constant_map(0.0), mm.constant_map(1.0), (mm.INF,))


# -- validation -------------------------------------------------------------


def test_validate_clean_polynomial_data():
    assert bd.validate(ENNEPER).clean


def test_validate_flags_uncompensated_pole():
    data = _data(_rat([1.0], [0.0, 1.0]), mm.constant_map(1.0), (0.0, mm.INF))
    report = bd.validate(data)
    assert not report.clean
    kinds = {i.kind for i in report.issues}
    assert "pole-zero-mismatch" in kinds
    bad = [i for i in report.issues if i.kind == "pole-zero-mismatch"][0]
    assert abs(complex(bad.location)) < 1e-8


def test_validate_accepts_compensated_pole():
    data = _data(_rat([1.0], [0.0, 1.0]), _rat([0.0, 0.0, 1.0]), (0.0, mm.INF))
    assert bd.validate(data).clean


def test_validate_flags_metric_degeneracy():
    data = _data(mm.constant_map(2.0), _rat([-1.0, 1.0]), (mm.INF,))
    report = bd.validate(data)
    assert [i.kind for i in report.issues] == ["metric-degeneracy"]
    assert abs(complex(report.issues[0].location) - 1.0) < 1e-8


def test_validate_flags_duplicate_punctures():
    data = _data(mm.identity_map(), mm.constant_map(1.0), (1.0, 1.0))
    assert any(i.kind == "duplicate-puncture" for i in bd.validate(data).issues)


def test_validate_flags_form_pole_off_puncture():
    data = _data(mm.identity_map(), _rat([1.0], [-2.0, 1.0]), (mm.INF,))
    report = bd.validate(data)
    assert [i.kind for i in report.issues] == ["form-pole"]


# -- metric density ---------------------------------------------------------


def test_metric_density_hyperbolic():
    assert bd.metric_density(ENNEPER, 1.0) == pytest.approx(4.0)


def test_metric_density_desitter_vanishes_on_ring():
    data = _data(mm.identity_map(), mm.constant_map(1.0), (mm.INF,),
                 bd.Target.DE_SITTER)
    assert bd.metric_density(data, 1.0) == pytest.approx(0.0)
    assert bd.metric_density(data, 2.0) == pytest.approx((1.0 - 4.0) ** 2)


def test_metric_density_finite_across_compensated_pole():
    data = _data(_rat([1.0], [0.0, 1.0]), _rat([0.0, 0.0, 1.0]), (mm.INF,))
    # (1 + 1/|z|^2)^2 |z^2|^2 = (|z|^2 + 1)^2: at z = 0 the limit is 1
    assert bd.metric_density(data, 0.0) == pytest.approx(1.0)


# -- curvature --------------------------------------------------------------


def test_gauss_curvature_horosphere_flat():
    zs = np.array([0.0, 1.0 + 1.0j, -3.0])
    assert np.abs(bd.gauss_curvature(HOROSPHERE, zs)).max() == 0.0


def test_gauss_curvature_at_origin():
    assert bd.gauss_curvature(ENNEPER, 0.0) == pytest.approx(-4.0)


def test_gauss_curvature_across_compensated_pole():
    data = _data(_rat([1.0], [0.0, 1.0]), _rat([0.0, 0.0, 1.0]), (mm.INF,))
    assert bd.gauss_curvature(data, 0.0) == pytest.approx(-4.0)
    z = 0.3 + 0.1j
    expect = -4.0 / (1.0 + abs(z) ** 2) ** 4
    assert bd.gauss_curvature(data, z) == pytest.approx(expect)


def test_gauss_curvature_desitter_refused():
    data = _data(mm.identity_map(), mm.constant_map(1.0), (mm.INF,),
                 bd.Target.DE_SITTER)
    with pytest.raises(ValueError):
        bd.gauss_curvature(data, 0.5)


def test_conformal_gauss_equation():
    """kappa * Lambda^2 + Laplacian(log Lambda) = 0 on a smooth patch."""
    chart = RectChart(-1.0, 1.0, -1.0, 1.0, nx=129, ny=129)
    z = chart.nodes()
    h = chart.spacings[1]
    lam2 = bd.metric_density(ENNEPER, z)
    kappa = bd.gauss_curvature(ENNEPER, z)
    loglam = 0.5 * np.log(lam2)
    lap = (loglam[1:-1, 2:] + loglam[1:-1, :-2] + loglam[2:, 1:-1]
           + loglam[:-2, 1:-1] - 4.0 * loglam[1:-1, 1:-1]) / h**2
    resid = kappa[1:-1, 1:-1] * lam2[1:-1, 1:-1] + lap
    scale = np.abs(kappa[1:-1, 1:-1] * lam2[1:-1, 1:-1]).max()
    assert np.abs(resid).max() <= 1e-3 * scale


# -- Hopf density -----------------------------------------------------------


def test_hopf_density():
    data = _data(_rat([0.0, 0.0, 1.0]), mm.constant_map(1.0), (mm.INF,))
    assert bd.hopf_density(data, 0.7 + 0.2j) == pytest.approx(2 * (0.7 + 0.2j))


def test_hopf_density_constant_for_catenoid_type():
    g = _rat([1.0], [0.0, 1.0])
    f = _rat([0.0, 0.0, 1.0])
    data = _data(g, f, (0.0, mm.INF))
    assert data.hopf.is_constant
    assert bd.hopf_density(data, 0.5j) == pytest.approx(-1.0)


# -- SU(1,1) gauge ----------------------------------------------------------


def _su11(t, phi=0.0, psi=0.0):
    return bd.SU11Element(p=math.cosh(t) * complex(math.cos(phi), math.sin(phi)),
                          q=math.sinh(t) * complex(math.cos(psi), math.sin(psi)))


def test_su11_element_rejects_non_unit():
    with pytest.raises(ValueError):
        bd.SU11Element(p=1.0, q=1.0)


def test_su11_action_on_flat_data():
    data = _data(mm.constant_map(0.0), mm.constant_map(1.0), (mm.INF,),
                 bd.Target.DE_SITTER)
    moved = bd.su11_action(data, _su11(1.0))
    assert moved.g(0.0) == pytest.approx(math.tanh(1.0))
    assert moved.f(0.0) == pytest.approx(math.cosh(1.0) ** 2)


def test_su11_action_preserves_metric_and_hopf():
    data = _data(_rat([0.0, 1.0, 0.5]), _rat([1.0, 0.4]), (mm.INF,),
                 bd.Target.DE_SITTER)
    rng = np.random.default_rng(7)
    zs = rng.normal(size=8) + 1j * rng.normal(size=8)
    for t, phi, psi in [(0.3, 0.0, 0.0), (1.2, 0.8, -0.4), (0.7, -2.0, 1.1)]:
        moved = bd.su11_action(data, _su11(t, phi, psi))
        assert np.abs(bd.metric_density(moved, zs)
                      - bd.metric_density(data, zs)).max() <= 1e-10 * 100
        assert np.abs(np.asarray(moved.hopf(zs))
                      - np.asarray(data.hopf(zs))).max() <= 1e-10


def test_su11_action_refused_for_hyperbolic_target():
    with pytest.raises(ValueError):
        bd.su11_action(ENNEPER, _su11(0.5))


# -- singular locus ---------------------------------------------------------


def test_singular_locus_traces_unit_circle():
    data = _data(mm.identity_map(), mm.constant_map(1.0), (mm.INF,),
                 bd.Target.DE_SITTER)
    chart = RectChart(-2.0, 2.0, -2.0, 2.0, nx=128, ny=128)
    mask = bd.singular_locus(data, chart)
    cells = np.argwhere(mask)
    assert len(cells) > 0
    z = chart.nodes()
    hy, hx = chart.spacings
    diag = math.hypot(hx, hy)
    for i, j in cells:
        assert abs(abs(z[i, j]) - 1.0) <= 1.5 * diag
    # the ring is closed: flagged cells appear in every angular octant
    angles = np.angle(z[tuple(cells.T)])
    hist, _ = np.histogram(angles, bins=8, range=(-math.pi, math.pi))
    assert (hist > 0).all()


def test_singular_locus_invariant_under_gauge():
    data = _data(mm.identity_map(), mm.constant_map(1.0), (mm.INF,),
                 bd.Target.DE_SITTER)
    chart = RectChart(-2.0, 2.0, -2.0, 2.0, nx=96, ny=96)
    base = bd.singular_locus(data, chart)
    moved = bd.singular_locus(bd.su11_action(data, _su11(0.9, 0.3, -0.7)), chart)
    assert np.array_equal(base, moved)


def test_topology_euler():
    assert bd.SurfaceTopology(n_ends=2).euler == 0
    assert _data(mm.identity_map(), mm.constant_map(1.0),
                 (0.0, 1.0, mm.INF)).topology.euler == -1
