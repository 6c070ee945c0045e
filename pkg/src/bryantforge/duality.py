"""Dual surfaces and the lift metric.

The hyperbolic Gauss map G and the Hopf density q of a surface determine a
second conformal structure on the same domain: the dual pair (G, -q/G') for
immersed surfaces, and the identical formula read as the lift metric for
spacelike faces.  This module builds dual data, evaluates the two associated
densities, checks the Schwarzian identity that ties g, G and q together, and
integrates the spherical area swept by G to produce the total-curvature
inequalities.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bryant_data import BryantData, SpherePullbackDensity, SurfaceTopology, \
    metric_density
from .meromorphic import BRANCH_CUT_DEFAULT, PowerRational, schwarzian

__all__ = [
    "DualData",
    "InequalityReport",
    "dual_data",
    "dual_metric_density",
    "lift_curvature_density",
    "schwarzian_identity_residual",
    "dual_total_curvature",
    "inequality_checks",
    "completeness_heuristic",
]

# Fixed chunk width for the band ladder.  Work inside a chunk may run on
# threads, but chunk boundaries (and hence the stopping decision and the
# final sum) never depend on the worker count.
_BAND_CHUNK = 4


def _worker_count() -> int:
    raw = os.environ.get("BRYANT_FORGE_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, min(n, _BAND_CHUNK))


# ---------------------------------------------------------------------------
# Dual data.


@dataclass(frozen=True)
class DualData:
    """The pair (G, -q/G') together with the data it came from."""

    g_sharp: PowerRational
    f_sharp: PowerRational
    source: BryantData

    @property
    def hopf(self) -> PowerRational:
        """Hopf density f_sharp * g_sharp'; equals minus the source's."""
        return self.f_sharp * self.g_sharp.derivative()

    def to_data(self) -> BryantData:
        """The dual pair repackaged as surface data on the same domain."""
        return BryantData(g=self.g_sharp, f=self.f_sharp,
                         punctures=self.source.punctures,
                         target=self.source.target)


def dual_data(data: BryantData, G: PowerRational) -> DualData:
    """Swap the secondary and hyperbolic Gauss maps: (g, f) -> (G, -q/G').

    Applying the construction twice (with the original g as the Gauss map of
    the dual) restores the original pair, since -(-q/G' * G')/g' = f.
    """
    if G.is_constant:
        raise ValueError("constant Gauss map admits no dual data")
    f_sharp = -(data.f * data.g.derivative()) / G.derivative()
    return DualData(g_sharp=G, f_sharp=f_sharp, source=data)


# ---------------------------------------------------------------------------
# The two densities attached to (G, q).


def dual_metric_density(G: PowerRational, q: PowerRational, z,
                        branch: float = BRANCH_CUT_DEFAULT):
    """(1 + |G|^2)^2 |q/G'|^2, the squared length density of the dual metric.

    The same expression is the lift metric of a spacelike face.  Critical
    points of G where q does not vanish are genuine metric singularities and
    evaluate to inf.
    """
    dG = G.derivative()
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=complex)
    gv = np.abs(np.asarray(G(z, branch)))
    dv = np.asarray(dG(z, branch))
    qv = np.asarray(q(z, branch))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = (1.0 + gv * gv) ** 2 * np.abs(qv / dv) ** 2
        out = np.where((dv == 0.0) & (qv != 0.0), np.inf, out)
    if scalar:
        return float(out)
    return out


def lift_curvature_density(G: PowerRational, z,
                           branch: float = BRANCH_CUT_DEFAULT):
    """4 |G'|^2 / (1 + |G|^2)^2: minus curvature times area for the dual.

    This is the unit-sphere area density pulled back by G, so integrating it
    over the domain measures the sphere covered by the Gauss map, with
    multiplicity.
    """
    return SpherePullbackDensity(G)(z, branch)


# ---------------------------------------------------------------------------
# Schwarzian identity.


def _circle_schwarzian(func, z: complex, radius: float, modes: int) -> complex:
    """S(func) at z from samples on a circle, for holomorphic func.

    Trapezoid sums around the circle are Taylor coefficients, so the first
    three derivatives come out with spectral accuracy; noise in the samples
    is amplified by about 6/radius^3 in the third derivative.
    """
    theta = 2.0 * np.pi * np.arange(modes) / modes
    pts = z + radius * np.exp(1j * theta)
    vals = np.array([complex(func(p)) for p in pts])
    coef = np.fft.fft(vals) / modes
    d1 = coef[1] / radius
    d2 = 2.0 * coef[2] / radius ** 2
    d3 = 6.0 * coef[3] / radius ** 3
    if d1 == 0.0:
        raise ZeroDivisionError("sampled map has a critical point here")
    r = d2 / d1
    return d3 / d1 - 1.5 * r * r


def schwarzian_identity_residual(data: BryantData, G, samples, *,
                                 branch: float = BRANCH_CUT_DEFAULT,
                                 radius: float = 0.1,
                                 modes: int = 24) -> float:
    """max over samples of |S(g) - S(G) - 2 f g'|.

    Near zero for the true hyperbolic Gauss map of the data, order one for an
    impostor.  G may be a PowerRational (closed-form Schwarzian) or any
    holomorphic callable such as a numerically transported Gauss map, in
    which case S(G) is sampled on circles of the given radius.
    """
    if data.g.is_constant:
        raise ValueError("the identity needs a nonconstant secondary map")
    q = data.hopf
    closed_form = isinstance(G, PowerRational)
    if closed_form and G.is_constant:
        raise ValueError("the identity needs a nonconstant Gauss map")
    worst = 0.0
    for z in samples:
        z = complex(z)
        sg = schwarzian(data.g, z, branch)
        if closed_form:
            sG = schwarzian(G, z, branch)
        else:
            sG = _circle_schwarzian(G, z, radius, modes)
        resid = abs(sg - sG - 2.0 * complex(np.asarray(q(z, branch))))
        worst = max(worst, resid)
    return worst


# ---------------------------------------------------------------------------
# Total curvature of the dual: the spherical area swept by G.


def _polar_band(dens, r_lo: float, r_hi: float, n_radial: int,
                n_theta: int, log_scale: bool) -> float:
    """Integral of dens over the annulus, Gauss-Legendre radially."""
    x, w = np.polynomial.legendre.leggauss(n_radial)
    if log_scale:
        s_lo, s_hi = math.log(r_lo), math.log(r_hi)
        s = 0.5 * (s_hi - s_lo) * x + 0.5 * (s_hi + s_lo)
        r = np.exp(s)
        wr = 0.5 * (s_hi - s_lo) * w * r * r
    else:
        r = 0.5 * (r_hi - r_lo) * x + 0.5 * (r_hi + r_lo)
        wr = 0.5 * (r_hi - r_lo) * w * r
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    z = r[:, None] * np.exp(1j * theta)[None, :]
    vals = dens(z)
    return float((2.0 * np.pi / n_theta) * np.sum(wr * np.sum(vals, axis=1)))


def dual_total_curvature(G: PowerRational, *,
                         initial_radius: float = 4.0,
                         band_ratio: float = 2.0,
                         max_bands: int = 48,
                         rel_tol: float = 1e-9,
                         n_radial: int = 48,
                         n_theta: int = 128) -> float:
    """Integral of the sphere pullback density of G over the plane.

    For rational G this is 4 pi deg(G).  The plane is exhausted by a central
    disk plus geometric annuli; once contributions decay the remaining tail
    is summed geometrically.  A ladder that fails to decay by the last band
    reports inf.
    """
    if G.is_constant:
        return 0.0
    dens = SpherePullbackDensity(G)

    # Central disk, subdivided so features at unit scale stay resolved.
    edges = [0.0]
    cut = initial_radius
    while cut > 1.0:
        cut /= 2.0
    while cut < initial_radius:
        edges.append(cut)
        cut *= 2.0
    edges.append(initial_radius)
    core_bands = list(zip(edges[:-1], edges[1:]))

    tail_bands = []
    r = initial_radius
    for _ in range(max_bands):
        tail_bands.append((r, r * band_ratio))
        r *= band_ratio

    def band_value(band, log_scale):
        lo, hi = band
        return _polar_band(dens, lo, hi, n_radial, n_theta, log_scale)

    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        contributions = list(pool.map(lambda b: band_value(b, False),
                                      core_bands))
        total = math.fsum(contributions)
        previous = None
        for start in range(0, len(tail_bands), _BAND_CHUNK):
            chunk = tail_bands[start:start + _BAND_CHUNK]
            values = list(pool.map(lambda b: band_value(b, True), chunk))
            contributions.extend(values)
            total = math.fsum(contributions)
            last = values[-1]
            if abs(last) <= rel_tol * max(abs(total), 1e-30):
                prior = values[-2] if len(values) > 1 else previous
                if prior is not None and abs(prior) > 0.0:
                    ratio = abs(last) / abs(prior)
                    if ratio < 0.9:
                        total += last * ratio / (1.0 - ratio)
                return total
            previous = values[-1]
    return math.inf


# ---------------------------------------------------------------------------
# Total-curvature inequalities.


@dataclass(frozen=True)
class InequalityReport:
    """One side-by-side comparison of normalized curvature and topology."""

    name: str
    lhs: float
    rhs: float
    strict: bool
    satisfied: bool
    margin: float
    applicable: bool = True
    note: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "satisfied": self.satisfied, "margin": self.margin,
                "applicable": self.applicable, "note": self.note}


def inequality_checks(total_curvature: float, topology: SurfaceTopology, *,
                      constant_gauss: bool = False,
                      ) -> tuple[InequalityReport, InequalityReport]:
    """Compare (1/2pi) integral of dual curvature against the topology.

    First report: the end-counting bound lhs <= euler - n_ends, which is
    tight on the degree-one two-ended fixture.  Second report: the strict
    bound lhs < euler.  Constant Gauss maps carry no dual surface, so the
    first check is skipped for them, and the second only applies while the
    strict bound is satisfiable at zero curvature.
    """
    if math.isinf(total_curvature) or math.isnan(total_curvature):
        raise ValueError("inequality checks need a finite total curvature")
    chi = float(topology.euler)
    n = topology.n_ends
    lhs = -total_curvature / (2.0 * math.pi)

    rhs = chi - n
    # quadrature noise must not flip an exact equality case
    slack = 1e-6 * (1.0 + abs(rhs))
    end_bound = InequalityReport(
        name="end_count_bound", lhs=lhs, rhs=rhs, strict=False,
        satisfied=bool(lhs <= rhs + slack), margin=rhs - lhs,
        applicable=not constant_gauss,
        note="skipped: constant Gauss map" if constant_gauss else "")

    strict_ok = lhs < chi
    strict_applicable = not (constant_gauss and n >= 2)
    strict_bound = InequalityReport(
        name="strict_euler_bound", lhs=lhs, rhs=chi, strict=True,
        satisfied=bool(strict_ok), margin=chi - lhs,
        applicable=strict_applicable,
        note="" if strict_applicable
        else "not applicable: zero curvature with euler <= 0")
    return end_bound, strict_bound


# ---------------------------------------------------------------------------
# Desk-scale completeness comparison.


def _ray_diverges(length_density, puncture, direction: complex,
                  depth: float) -> bool:
    """Does the radial length integral toward the puncture keep growing?"""
    def partial(t_hi: float) -> float:
        t = np.linspace(0.0, t_hi, 2048)
        if np.isinf(abs(puncture)):
            z = direction * np.exp(t)
            jac = np.exp(t)
        else:
            z = puncture + direction * np.exp(-t)
            jac = np.exp(-t)
        vals = length_density(z) * jac
        return float(np.trapezoid(vals, t))
    half, full = partial(depth / 2.0), partial(depth)
    return full > 1.5 * half


def completeness_heuristic(data: BryantData, dual: DualData, puncture, *,
                           direction: complex = 1.0 + 0.0j,
                           depth: float = 16.0,
                           branch: float = BRANCH_CUT_DEFAULT,
                           ) -> tuple[bool, bool]:
    """Divergence of the primal and dual length integrals toward one end.

    Completeness of either metric should imply completeness of the other;
    this samples a single ray, so it is a consistency probe rather than a
    theorem checker.
    """
    def primal(z):
        return np.sqrt(np.asarray(metric_density(data, z, branch)))

    gs, fs = dual.g_sharp, dual.f_sharp

    def dual_len(z):
        gv = np.abs(np.asarray(gs(z, branch)))
        return (1.0 + gv * gv) * np.abs(np.asarray(fs(z, branch)))

    return (_ray_diverges(primal, puncture, direction, depth),
            _ray_diverges(dual_len, puncture, direction, depth))
