"""Intrinsic geometry on sampled conformal metrics.

A conformal metric on a chart is the per-node length density ds = Lambda |dz|.
Everything here works on that sampled density: geodesic distance fields by
Dijkstra on a weighted neighbor graph, geodesic-ball volume growth, total
curvature by exhaustion, log-log decay fits of the curvature along an end
against the invariants of the end expansion, and the divergence test for the
integral of r dr / vol(B_r).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .bryant_data import BryantData, metric_density
from .grids import Chart, LogPolarChart
from .meromorphic import (BRANCH_CUT_DEFAULT, EndExpansion, end_expansion,
                          is_infinite, localize, order_at_zero)

__all__ = [
    "MetricGrid",
    "VolumeGrowth",
    "DecayFit",
    "ParabolicityReport",
    "metric_grid",
    "end_band_chart",
    "geodesic_distance",
    "ring_distance",
    "volume_growth",
    "total_curvature",
    "curvature_decay_fit",
    "bounded_end_expansion",
    "integrability_check",
    "parabolicity_integral",
]

# Neighbor steps per stencil, one orientation each (the graph is undirected).
# 8 is the classic king-move graph (worst-case overestimate 8.2%); 16 adds
# knight moves (2.8%); 32 adds (3,1) and (3,2) moves (1.3%).
_STENCILS = {
    8: ((0, 1), (1, -1), (1, 0), (1, 1)),
    16: ((0, 1), (1, -1), (1, 0), (1, 1),
         (1, -2), (1, 2), (2, -1), (2, 1)),
    32: ((0, 1), (1, -1), (1, 0), (1, 1),
         (1, -2), (1, 2), (2, -1), (2, 1),
         (1, -3), (1, 3), (3, -1), (3, 1),
         (2, -3), (2, 3), (3, -2), (3, 2)),
}


@dataclass(eq=False)
class MetricGrid:
    """Sampled length density on a chart with a validity mask."""

    chart: Chart
    density: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.density.shape != self.chart.shape or \
                self.mask.shape != self.chart.shape:
            raise ValueError("density and mask must match the chart shape")
        good = self.density[self.mask]
        if good.size and (not np.all(np.isfinite(good)) or good.min() <= 0.0):
            raise ValueError("length density must be finite and positive "
                             "on unmasked nodes")

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.chart.nodes()

    @cached_property
    def cell_area(self) -> np.ndarray:
        """z-plane area represented by each node."""
        h0, h1 = self.chart.spacings
        return self.chart.stretch() ** 2 * (h0 * h1)

    def volume_weights(self) -> np.ndarray:
        """Per-node contribution Lambda^2 * cellArea, zero off the mask."""
        w = self.density ** 2 * self.cell_area
        return np.where(self.mask, w, 0.0)


def metric_grid(data: BryantData, chart: Chart) -> MetricGrid:
    """Sample the metric of the data on the chart, masking degeneracies."""
    lam2 = np.asarray(metric_density(data, chart.nodes(), chart.branch))
    with np.errstate(invalid="ignore"):
        lam = np.sqrt(lam2)
    mask = np.isfinite(lam) & (lam > 0.0)
    return MetricGrid(chart, np.where(mask, lam, 1.0), mask)


def end_band_chart(puncture, r_inner: float, r_outer: float, *,
                   n_rho: int = 96, n_theta: int = 96,
                   branch: float = BRANCH_CUT_DEFAULT,
                   name: str = "end") -> LogPolarChart:
    """Full annulus around one end, deepest nodes in row 0.

    r_inner and r_outer are distances from the puncture for a finite end
    and |z| bounds for an end at infinity; either way the last row is the
    ring facing the compact core, the natural distance source.
    """
    if not 0.0 < r_inner < r_outer:
        raise ValueError("need 0 < r_inner < r_outer")
    if is_infinite(puncture):
        lo, hi = -math.log(r_outer), -math.log(r_inner)
    else:
        lo, hi = math.log(r_inner), math.log(r_outer)
    return LogPolarChart(puncture, lo, hi, theta0=0.0, theta1=2.0 * math.pi,
                         n_rho=n_rho, n_theta=n_theta, periodic=True,
                         branch=branch, name=name)


# ---------------------------------------------------------------------------
# Geodesic distance.


def _source_indices(grid: MetricGrid, source) -> list[int]:
    nr, nc = grid.chart.shape
    if isinstance(source, tuple) and len(source) == 2 and \
            all(isinstance(k, (int, np.integer)) for k in source):
        entries = [source]
    elif np.ndim(source) == 0:
        z = complex(source)
        dist = np.abs(grid.nodes - z)
        dist = np.where(grid.mask, dist, np.inf)
        flat = int(np.argmin(dist))
        entries = [divmod(flat, nc)]
    else:
        entries = [(int(i), int(j)) for i, j in source]
    out = []
    for i, j in entries:
        if not (0 <= i < nr and 0 <= j < nc):
            raise ValueError(f"source node {(i, j)} outside the grid")
        if not grid.mask[i, j]:
            raise ValueError(f"source node {(i, j)} is masked")
        out.append(i * nc + j)
    return out


def _neighbor_graph(grid: MetricGrid, neighbors: int):
    if neighbors not in _STENCILS:
        raise ValueError(f"neighbors must be one of {sorted(_STENCILS)}")
    nr, nc = grid.chart.shape
    idx = np.arange(nr * nc).reshape(nr, nc)
    zf = grid.nodes.reshape(-1)
    lam = grid.density.reshape(-1)
    ok = grid.mask.reshape(-1)
    rows, cols, wts = [], [], []
    for di, dj in _STENCILS[neighbors]:
        if grid.chart.periodic:
            a = idx[:nr - di, :]
            b = np.roll(idx, -dj, axis=1)[di:, :]
        else:
            jlo, jhi = max(0, -dj), nc - max(0, dj)
            if jhi <= jlo or di >= nr:
                continue
            a = idx[:nr - di, jlo:jhi]
            b = idx[di:, jlo + dj:jhi + dj]
        a = a.reshape(-1)
        b = b.reshape(-1)
        keep = ok[a] & ok[b]
        a, b = a[keep], b[keep]
        w = 0.5 * (lam[a] + lam[b]) * np.abs(zf[a] - zf[b])
        rows.append(a)
        cols.append(b)
        wts.append(w)
    n = nr * nc
    return coo_matrix((np.concatenate(wts),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()


def geodesic_distance(grid: MetricGrid, source, *,
                      neighbors: int = 32) -> np.ndarray:
    """Shortest-path distance field from the source node (or node set).

    Edge weight is the mean endpoint density times the Euclidean edge
    length, so the result overestimates the true distance by at most the
    stencil's metrication factor.  A complex source snaps to the nearest
    valid node; a list of index pairs gives the distance to the set.
    Nodes cut off by the mask come back as inf.
    """
    sources = _source_indices(grid, source)
    graph = _neighbor_graph(grid, neighbors)
    dist = dijkstra(graph, directed=False, indices=sources, min_only=True)
    out = dist.reshape(grid.chart.shape)
    return np.where(grid.mask, out, np.inf)


def ring_distance(grid: MetricGrid, row: int = -1, *,
                  neighbors: int = 32) -> np.ndarray:
    """Distance to the valid nodes of one grid row.

    With an end-band chart and the default row this is the distance to the
    ring bounding the end neighborhood, the quantity the decay envelope is
    phrased in.
    """
    nr, nc = grid.chart.shape
    row = row % nr
    sources = [(row, j) for j in range(nc) if grid.mask[row, j]]
    if not sources:
        raise ValueError(f"row {row} has no valid nodes")
    return geodesic_distance(grid, sources, neighbors=neighbors)


# ---------------------------------------------------------------------------
# Volume growth.


@dataclass(frozen=True)
class VolumeGrowth:
    """Geodesic-ball volumes with the top-decade growth fit."""

    radii: np.ndarray
    volumes: np.ndarray
    exponent: float
    coefficient: float
    bound: float
    guard: float


def _trusted_radius(grid: MetricGrid, rho: np.ndarray) -> float:
    """Largest r for which B_r stays two cells inside the chart."""
    nr, nc = grid.chart.shape
    frame = np.zeros((nr, nc), dtype=bool)
    frame[:2, :] = True
    frame[-2:, :] = True
    if not grid.chart.periodic:
        frame[:, :2] = True
        frame[:, -2:] = True
    vals = rho[frame & grid.mask]
    vals = vals[np.isfinite(vals)]
    return float(vals.min()) if vals.size else math.inf


def volume_growth(grid: MetricGrid, rho: np.ndarray, radii) -> VolumeGrowth:
    """vol(B_r) = sum of Lambda^2 cellArea over the ball, plus growth fits.

    Radii beyond the boundary-truncation guard are dropped with a warning;
    the exponent, the quadratic coefficient (vol ~ c r^2) and the bound
    max vol/r^2 are all taken over the top decade of kept radii.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != grid.chart.shape:
        raise ValueError("distance field must match the chart shape")
    radii = np.sort(np.asarray(radii, dtype=float))
    if radii.size == 0 or radii[0] <= 0.0:
        raise ValueError("radii must be positive")
    guard = _trusted_radius(grid, rho)
    kept = radii[radii <= guard]
    if kept.size < radii.size:
        warnings.warn(f"dropped {radii.size - kept.size} radii beyond the "
                      f"trusted radius {guard:.6g}", stacklevel=2)
    if kept.size < 2:
        raise ValueError("fewer than two radii inside the trusted region")
    weights = grid.volume_weights()
    order = np.argsort(rho, axis=None)
    rho_sorted = rho.reshape(-1)[order]
    wsum = np.cumsum(weights.reshape(-1)[order])
    pos = np.searchsorted(rho_sorted, kept, side="right")
    volumes = np.where(pos > 0, wsum[np.minimum(pos, wsum.size) - 1], 0.0)

    sel = (kept >= kept[-1] / 10.0) & (volumes > 0.0)
    if sel.sum() < 2:
        sel = volumes > 0.0
    r_fit, v_fit = kept[sel], volumes[sel]
    exponent = float(np.polyfit(np.log(r_fit), np.log(v_fit), 1)[0])
    coefficient = float(np.sum(v_fit * r_fit ** 2) / np.sum(r_fit ** 4))
    bound = float(np.max(v_fit / r_fit ** 2))
    return VolumeGrowth(radii=kept, volumes=volumes, exponent=exponent,
                        coefficient=coefficient, bound=bound, guard=guard)


# ---------------------------------------------------------------------------
# Total curvature by exhaustion.


def total_curvature(grid: MetricGrid, kappa: np.ndarray, radii) -> float:
    """Integral of (-kappa) over the metric area, exhausted by |z| <= r.

    Exhaustion increments between consecutive radii must decay; once they
    do, the remaining tail is summed as a geometric series.  Increments
    that refuse to decay report inf.
    """
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != grid.chart.shape:
        raise ValueError("curvature field must match the chart shape")
    valid = grid.mask & np.isfinite(kappa)
    if np.any(kappa[valid] > 1e-12):
        raise ValueError("curvature samples must be nonpositive")
    radii = np.sort(np.asarray(radii, dtype=float))
    r = np.abs(grid.nodes)
    weights = np.where(valid, -kappa, 0.0) * grid.volume_weights()
    order = np.argsort(r, axis=None)
    wsum = np.cumsum(weights.reshape(-1)[order])
    pos = np.searchsorted(r.reshape(-1)[order], radii, side="right")
    partial = np.where(pos > 0, wsum[np.minimum(pos, wsum.size) - 1], 0.0)
    total = float(partial[-1])
    inc = np.diff(partial)
    if inc.size < 2 or inc[-1] <= 0.0:
        return total
    ratio = inc[-1] / inc[-2] if inc[-2] > 0.0 else math.inf
    if ratio >= 0.95:
        return math.inf
    return total + float(inc[-1] * ratio / (1.0 - ratio))


# ---------------------------------------------------------------------------
# Curvature decay along an end.


@dataclass(frozen=True)
class DecayFit:
    """Envelope kappa >= -c / rho^(2+epsilon) fitted on a tail."""

    c: float
    epsilon: float
    r0: float
    residual: float
    slope: float
    predicted_slope: float

    @property
    def has_prediction(self) -> bool:
        return math.isfinite(self.predicted_slope)


def bounded_end_expansion(data: BryantData, puncture) -> EndExpansion:
    """End expansion in a rotated frame where g stays bounded at the end.

    The invariants feeding the decay exponent assume the local factor of g
    is analytic; when g blows up at the puncture the sphere rotation
    g -> -1/g, f -> g^2 f (an isometry of the target) restores that.
    """
    g, f = data.g, data.f
    if order_at_zero(localize(g, puncture)) < 0.0:
        g, f = -g.reciprocal(), data.g * data.g * f
    return end_expansion(g, f, puncture)


def curvature_decay_fit(kappa, rho, end: EndExpansion, *,
                        r0: float | None = None) -> DecayFit:
    """Log-log fit of -kappa against rho on the tail rho >= r0.

    The envelope constant is chosen so 0 >= kappa >= -c/rho^(2+epsilon)
    holds at every tail sample.  The predicted slope -(2 + 2(1+beta)/I)
    only applies for ends with I > 0 and bounded g (beta >= -1); otherwise
    it is nan.  A tail with kappa identically 0 reports c = 0 and an
    infinite epsilon.
    """
    kappa = np.asarray(kappa, dtype=float).reshape(-1)
    rho = np.asarray(rho, dtype=float).reshape(-1)
    keep = np.isfinite(kappa) & np.isfinite(rho) & (rho > 0.0)
    kappa, rho = kappa[keep], rho[keep]
    if kappa.size == 0:
        raise ValueError("no finite samples to fit")
    if np.any(kappa > 1e-12):
        raise ValueError("curvature samples must be nonpositive")
    if r0 is None:
        r0 = float(rho.max() / 10.0)
    tail = rho >= r0
    if tail.sum() < 2:
        raise ValueError("fewer than two samples beyond r0")
    k_t, r_t = -kappa[tail], rho[tail]

    beta, big_i = end.beta, end.big_i
    if big_i > 0.0 and beta >= -1.0:
        predicted = -(2.0 + 2.0 * (1.0 + beta) / big_i)
    else:
        predicted = math.nan

    if np.all(k_t <= 1e-300):
        return DecayFit(c=0.0, epsilon=math.inf, r0=r0, residual=0.0,
                        slope=math.nan, predicted_slope=predicted)
    pos = k_t > 0.0
    logs = np.log(k_t[pos])
    logr = np.log(r_t[pos])
    slope, intercept = np.polyfit(logr, logs, 1)
    residual = float(np.sqrt(np.mean((logs - slope * logr - intercept) ** 2)))
    epsilon = float(-slope - 2.0)
    c = float(np.max(k_t * r_t ** (2.0 + epsilon)))
    return DecayFit(c=c, epsilon=epsilon, r0=float(r0), residual=residual,
                    slope=float(slope), predicted_slope=predicted)


def integrability_check(c: float, epsilon: float, r0: float,
                        kappa0: float = 0.0) -> float:
    """Closed form of the integral of s k(s) for the fitted envelope.

    k is kappa0 on the compact part [0, r0] and c/s^(2+epsilon) beyond, so
    the integral is kappa0 r0^2/2 + c/(epsilon r0^epsilon).  A fit with
    epsilon <= 0 integrates to infinity, which is reported, not raised.
    """
    if c < 0.0 or r0 <= 0.0:
        raise ValueError("need c >= 0 and r0 > 0")
    core = 0.5 * kappa0 * r0 * r0
    if c == 0.0:
        return core
    if epsilon <= 0.0:
        return math.inf
    return core + c / (epsilon * r0 ** epsilon)


# ---------------------------------------------------------------------------
# Parabolicity.


@dataclass(frozen=True)
class ParabolicityReport:
    """Trapezoid growth of the integral of r dr / vol(B_r)."""

    radii: np.ndarray
    integral: np.ndarray
    slope: float
    early_slope: float
    late_slope: float
    divergent: bool
    verdict: str


def parabolicity_integral(radii, volumes, *,
                          r0: float | None = None) -> ParabolicityReport:
    """Integrate r/vol(B_r) and regress the result against ln(R/r0).

    Quadratic volume growth makes the integral a multiple of ln(R/r0), so a
    slope that persists between the early and late halves of the range is
    the divergence signature; vanishing late slope means the test cannot
    certify divergence.
    """
    radii = np.asarray(radii, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    if radii.shape != volumes.shape or radii.ndim != 1:
        raise ValueError("radii and volumes must be matching 1-d arrays")
    keep = volumes > 0.0
    radii, volumes = radii[keep], volumes[keep]
    if radii.size < 3:
        raise ValueError("need at least three radii with positive volume")
    if np.any(np.diff(radii) <= 0.0):
        raise ValueError("radii must be strictly increasing")
    if r0 is not None:
        sel = radii >= r0
        radii, volumes = radii[sel], volumes[sel]
        if radii.size < 3:
            raise ValueError("need at least three radii beyond r0")
    r0 = float(radii[0])

    integral = cumulative_trapezoid(radii / volumes, radii, initial=0.0)
    x = np.log(radii / r0)
    slope = float(np.sum(integral * x) / np.sum(x * x))
    mid = radii.size // 2
    early = float(integral[mid] / x[mid]) if x[mid] > 0.0 else math.nan
    dx = x[-1] - x[mid]
    late = float((integral[-1] - integral[mid]) / dx) if dx > 0.0 else math.nan
    divergent = bool(math.isfinite(late) and math.isfinite(early)
                     and late > 0.0 and late >= 0.5 * early)
    return ParabolicityReport(
        radii=radii, integral=integral, slope=slope,
        early_slope=early, late_slope=late, divergent=divergent,
        verdict="divergent" if divergent else "non-divergent")
