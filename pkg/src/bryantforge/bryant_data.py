"""Surface data (g, f dz) on a punctured sphere and its first invariants.

The pair g (a meromorphic map) and f (the density of a holomorphic 1-form)
determines a mean curvature 1 surface in hyperbolic 3-space, or a spacelike
mean curvature 1 face in de Sitter 3-space.  This module holds the data
container, admissibility diagnostics, the induced metric density
(1 +/- |g|^2)^2 |f|^2, curvature, the Hopf density f g', the SU(1,1) gauge
action on de Sitter data, and the |g| = 1 singular locus on a chart.

Densities are evaluated through the pair (|f|, |g^2 f|); both factors stay
finite at a compensated pole of g, so no special-casing is needed where g
blows up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
import numpy.polynomial.polynomial as npoly

from .grids import Chart
from .meromorphic import (
    BRANCH_CUT_DEFAULT,
    PowerRational,
    is_infinite,
    order_at_zero,
    polynomial_roots,
)

PUNCTURE_MATCH_TOL = 1e-8
ORDER_MATCH_TOL = 1e-9


class Target(Enum):
    HYPERBOLIC = "hyperbolic"
    DE_SITTER = "de-sitter"


@dataclass(frozen=True)
class SurfaceTopology:
    """Genus-zero topology bookkeeping: Euler number 2 - n_ends."""

    n_ends: int
    genus: int = 0

    def __post_init__(self):
        if self.genus != 0:
            raise ValueError("only genus zero is supported")

    @property
    def euler(self) -> int:
        return 2 - self.n_ends


@dataclass(eq=False)
class BryantData:
    """Holomorphic data (g, f dz) with punctures and a target space."""

    g: PowerRational
    f: PowerRational
    punctures: tuple
    target: Target = Target.HYPERBOLIC

    def __post_init__(self):
        self.punctures = tuple(self.punctures)

    @property
    def topology(self) -> SurfaceTopology:
        return SurfaceTopology(n_ends=len(self.punctures))

    @cached_property
    def g_squared_f(self) -> PowerRational:
        return self.g * self.g * self.f

    @cached_property
    def hopf(self) -> PowerRational:
        """Density of the Hopf differential, f g'."""
        return self.f * self.g.derivative()


@dataclass(frozen=True)
class SU11Element:
    """Element [[p, q], [conj q, conj p]] of SU(1,1)."""

    p: complex
    q: complex

    def __post_init__(self):
        defect = abs(self.p * self.p.conjugate() - self.q * self.q.conjugate() - 1.0)
        if defect > 1e-9:
            raise ValueError(f"not in SU(1,1): |p|^2 - |q|^2 - 1 = {defect:.3g}")

    def matrix(self) -> np.ndarray:
        return np.array([[self.p, self.q],
                         [self.q.conjugate(), self.p.conjugate()]], dtype=complex)


# ---------------------------------------------------------------------------
# Diagnostics.


@dataclass(frozen=True)
class DataIssue:
    kind: str
    location: object
    message: str


@dataclass(frozen=True)
class DataReport:
    issues: tuple

    @property
    def clean(self) -> bool:
        return len(self.issues) == 0


def _clustered_roots(coeffs) -> list[tuple[complex, int]]:
    out: list[list] = []
    for r in polynomial_roots(coeffs):
        for entry in out:
            if abs(entry[0] - r) <= 1e-6 * (1.0 + abs(r)):
                entry[1] += 1
                entry[0] += (r - entry[0]) / entry[1]
                break
        else:
            out.append([r, 1])
    return [(complex(r), int(k)) for r, k in out]


def _order_at(m: PowerRational, point: complex,
              clusters: dict) -> float:
    """Order of m at a finite point from pre-clustered roots."""
    def mult(key):
        return sum(k for r, k in clusters[key]
                   if abs(r - point) <= 1e-6 * (1.0 + abs(point)))
    order = float(mult((id(m), "numer")) - mult((id(m), "denom")))
    if m.alpha != 0.0 and abs(point) <= 1e-12:
        order += m.alpha
    return order


def _is_puncture(point: complex, punctures) -> bool:
    return any((not is_infinite(p)) and
               abs(complex(p) - point) <= PUNCTURE_MATCH_TOL * (1.0 + abs(point))
               for p in punctures)


def validate(data: BryantData) -> DataReport:
    """Admissibility diagnostics for the data pair.

    Checked at every finite point: a pole of g of order k must sit on a zero
    of f of order exactly 2k (so g^2 f stays finite); a pole of f elsewhere
    is flagged; a zero of f not compensated by a g-pole degenerates the
    metric and is flagged unless it is a declared puncture.  Orders at
    infinity are end data and are not checked.  Duplicate punctures are
    flagged.
    """
    issues: list[DataIssue] = []

    finite = [p for p in data.punctures if not is_infinite(p)]
    n_inf = sum(1 for p in data.punctures if is_infinite(p))
    if n_inf > 1:
        issues.append(DataIssue("duplicate-puncture", None,
                                "infinity declared more than once"))
    for i, p in enumerate(finite):
        for q in finite[i + 1:]:
            if abs(complex(p) - complex(q)) <= PUNCTURE_MATCH_TOL * (1.0 + abs(p)):
                issues.append(DataIssue("duplicate-puncture", complex(p),
                                        f"puncture {complex(p)} declared more than once"))

    clusters = {
        (id(data.g), "numer"): _clustered_roots(data.g.numer),
        (id(data.g), "denom"): _clustered_roots(data.g.denom),
        (id(data.f), "numer"): _clustered_roots(data.f.numer),
        (id(data.f), "denom"): _clustered_roots(data.f.denom),
    }
    points: list[complex] = []
    for lst in clusters.values():
        for r, _k in lst:
            if not any(abs(r - s) <= 1e-6 * (1.0 + abs(r)) for s in points):
                points.append(r)
    if (data.g.alpha != 0.0 or data.f.alpha != 0.0) and \
            not any(abs(s) <= 1e-12 for s in points):
        points.append(0.0 + 0.0j)

    for p in sorted(points, key=lambda w: (w.real, w.imag)):
        og = _order_at(data.g, p, clusters)
        of = _order_at(data.f, p, clusters)
        if og < 0:
            if abs(of - 2.0 * (-og)) > ORDER_MATCH_TOL:
                issues.append(DataIssue(
                    "pole-zero-mismatch", p,
                    f"pole of g of order {-og:g} at {p:.6g} needs a zero of f "
                    f"of order {2 * (-og):g}, found order {of:g}"))
        elif of < 0 and not _is_puncture(p, data.punctures):
            issues.append(DataIssue(
                "form-pole", p,
                f"pole of f at non-puncture {p:.6g}; the metric is infinite there"))
        elif of > 0 and not _is_puncture(p, data.punctures):
            issues.append(DataIssue(
                "metric-degeneracy", p,
                f"zero of f at {p:.6g} without a matching pole of g; "
                "the metric degenerates there"))
    return DataReport(tuple(issues))


# ---------------------------------------------------------------------------
# Metric, curvature, Hopf density.


def metric_density(data: BryantData, z, branch: float = BRANCH_CUT_DEFAULT):
    """Squared conformal density of the induced metric, (1 +/- |g|^2)^2 |f|^2.

    The sign is + for hyperbolic targets and - for de Sitter targets (where
    the density vanishes on the |g| = 1 singular set).  Evaluated as
    (|f| +/- |g^2 f|)^2, which stays finite across compensated poles of g.
    """
    x = np.abs(np.asarray(data.f(z, branch)))
    y = np.abs(np.asarray(data.g_squared_f(z, branch)))
    if data.target is Target.DE_SITTER:
        out = (x - y) ** 2
    else:
        out = (x + y) ** 2
    if out.ndim == 0:
        return float(out)
    return out


class SpherePullbackDensity:
    """4 |m'|^2 / (1 + |m|^2)^2: the unit-sphere area density pulled back by m.

    Where |m| > 1 the same quantity is computed from 1/m (the density is
    inversion invariant), so poles of m need no special treatment.
    """

    def __init__(self, m: PowerRational):
        self.m = m
        self.dm = m.derivative()
        self.constant = m.is_constant
        if not self.constant and np.abs(m.numer).max() > 0.0:
            inv = m.reciprocal()
            self.minv = inv
            self.dminv = inv.derivative()
        else:
            self.minv = None
            self.dminv = None

    def __call__(self, z, branch: float = BRANCH_CUT_DEFAULT):
        z = np.asarray(z, dtype=complex)
        if self.constant:
            out = np.zeros(z.shape)
            return float(out) if out.ndim == 0 else out
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            v = np.abs(np.asarray(self.m(z, branch)))
            direct = 4.0 * np.abs(np.asarray(self.dm(z, branch))) ** 2 \
                / (1.0 + v * v) ** 2
            vi = np.abs(np.asarray(self.minv(z, branch)))
            inverted = 4.0 * np.abs(np.asarray(self.dminv(z, branch))) ** 2 \
                / (1.0 + vi * vi) ** 2
            out = np.where(v <= 1.0, direct, inverted)
        if out.ndim == 0:
            return float(out)
        return out


def gauss_curvature(data: BryantData, z, branch: float = BRANCH_CUT_DEFAULT):
    """Intrinsic curvature -4 |g'|^2 / (|f|^2 (1 + |g|^2)^4), hyperbolic only.

    For de Sitter targets the curvature is exposed through the dual/lift
    metric machinery instead; asking for it here is an error.
    """
    if data.target is Target.DE_SITTER:
        raise ValueError("curvature of de Sitter faces is exposed through "
                         "the lift metric, not a direct formula")
    fs = SpherePullbackDensity(data.g)(z, branch)
    lam2 = metric_density(data, z, branch)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.asarray(fs) / np.asarray(lam2)
        out = np.where(np.asarray(fs) == 0.0, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def hopf_density(data: BryantData, z, branch: float = BRANCH_CUT_DEFAULT):
    """Density f g' of the Hopf differential (f g') dz^2."""
    return data.hopf(z, branch)


# ---------------------------------------------------------------------------
# SU(1,1) gauge action on de Sitter data.


def su11_action(data: BryantData, b: SU11Element) -> BryantData:
    """Gauge-transformed data (pg + q)/(conj(q) g + conj(p)), (conj(q) g + conj(p))^2 f.

    Leaves the de Sitter metric density and the Hopf density unchanged and
    maps the |g| = 1 singular set onto itself.
    """
    if data.target is not Target.DE_SITTER:
        raise ValueError("the SU(1,1) gauge acts on de Sitter data")
    if not data.g.is_rational:
        raise ValueError("gauge action implemented for rational g")
    p, q = complex(b.p), complex(b.q)
    gp, gq = data.g.numer, data.g.denom
    numer = npoly.polyadd(p * gp, q * gq)
    denom = npoly.polyadd(q.conjugate() * gp, p.conjugate() * gq)
    g_new = PowerRational(0.0, numer, denom)
    f_new = data.f * PowerRational(0.0, npoly.polymul(denom, denom),
                                   npoly.polymul(gq, gq))
    return BryantData(g=g_new, f=f_new, punctures=data.punctures,
                      target=data.target)


# ---------------------------------------------------------------------------
# Singular locus on a chart.


def singular_locus(data: BryantData, chart: Chart) -> np.ndarray:
    """Boolean cell mask where |g|^2 - 1 changes sign across cell corners.

    Cell (i, j) has corners at nodes (i, j), (i, j+1), (i+1, j), (i+1, j+1);
    periodic bands include the seam column.  Meaningful for de Sitter data,
    where the flagged cells trace the singular set of the face.
    """
    z = chart.nodes()
    with np.errstate(over="ignore", invalid="ignore"):
        s = np.abs(np.asarray(data.g(z, chart.branch))) ** 2 - 1.0
    s = np.where(np.isfinite(s), s, np.inf)
    cols = [s, np.roll(s, -1, axis=1)]
    if not chart.periodic:
        cols = [s[:, :-1], s[:, 1:]]
    a, b = cols
    corner_min = np.minimum(np.minimum(a[:-1], b[:-1]), np.minimum(a[1:], b[1:]))
    corner_max = np.maximum(np.maximum(a[:-1], b[:-1]), np.maximum(a[1:], b[1:]))
    return (corner_min <= 0.0) & (corner_max >= 0.0)


def singular_cells(data: BryantData, chart: Chart) -> list[tuple[int, int]]:
    mask = singular_locus(data, chart)
    return [tuple(ij) for ij in np.argwhere(mask)]
