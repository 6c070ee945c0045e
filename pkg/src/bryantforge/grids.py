"""Chart grids: axis-aligned rectangles and log-polar annular bands.

A chart is a uniform grid in chart coordinates (x, y) or (rho, theta)
together with the conformal map into the z-plane.  Log-polar bands sit
around a finite puncture (t = z - p) or around infinity (t = 1/z); the
node at chart coordinates (rho, theta) is t = exp(rho + i theta), so the
conformal stretch |dz/dw| of the chart parametrization is |t| for finite
centers and |z| around infinity.

Array convention everywhere: index [i, j] walks rows along axis 0 (y or
rho) and columns along axis 1 (x or theta); flattening is row-major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .meromorphic import BRANCH_CUT_DEFAULT, INF, is_infinite


class ChartError(ValueError):
    """A chart is unusable for the requested operation."""


@dataclass(frozen=True)
class RectChart:
    """Axis-aligned rectangle [x0, x1] x [y0, y1] with nx * ny nodes."""

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int = 256
    ny: int = 256
    branch: float = BRANCH_CUT_DEFAULT
    name: str = "rect"

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0 or self.nx < 2 or self.ny < 2:
            raise ChartError(f"degenerate rectangle chart {self.name!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def spacings(self) -> tuple[float, float]:
        return ((self.y1 - self.y0) / (self.ny - 1),
                (self.x1 - self.x0) / (self.nx - 1))

    @property
    def periodic(self) -> bool:
        return False

    def nodes(self) -> np.ndarray:
        xs = np.linspace(self.x0, self.x1, self.nx)
        ys = np.linspace(self.y0, self.y1, self.ny)
        return xs[None, :] + 1j * ys[:, None]

    def stretch(self) -> np.ndarray:
        """|dz/dw| at each node for chart coordinate w = x + i y."""
        return np.ones(self.shape)

    def contains(self, z: complex) -> bool:
        if is_infinite(z):
            return False
        return (self.x0 <= z.real <= self.x1) and (self.y0 <= z.imag <= self.y1)

    def refined(self, factor: int = 2) -> "RectChart":
        return RectChart(self.x0, self.x1, self.y0, self.y1,
                         (self.nx - 1) * factor + 1, (self.ny - 1) * factor + 1,
                         self.branch, self.name)


@dataclass(frozen=True)
class LogPolarChart:
    """Annular band around a puncture, uniform in (rho, theta) = log t.

    rho runs over [rho0, rho1] along axis 0 and theta over [theta0, theta1]
    along axis 1.  With periodic=True the band is a full annulus and the
    theta sampling omits the duplicate seam column (theta1 - theta0 must be
    2*pi); such charts serve distance and quadrature work but are rejected
    by lift routines, which need simply connected charts.
    """

    center: complex
    rho0: float
    rho1: float
    theta0: float = -math.pi
    theta1: float = math.pi
    n_rho: int = 192
    n_theta: int = 192
    periodic: bool = False
    branch: float = BRANCH_CUT_DEFAULT
    name: str = "band"
    center_is_inf: bool = field(init=False, default=False)

    def __post_init__(self):
        object.__setattr__(self, "center_is_inf", is_infinite(self.center))
        span = self.theta1 - self.theta0
        if self.rho1 <= self.rho0 or self.n_rho < 2 or self.n_theta < 2:
            raise ChartError(f"degenerate band chart {self.name!r}")
        if self.periodic:
            if abs(span - 2.0 * math.pi) > 1e-12:
                raise ChartError("periodic bands must span exactly 2*pi")
        elif span <= 0 or span >= 2.0 * math.pi:
            raise ChartError("non-periodic bands must span less than 2*pi "
                             "(declare an angular cut)")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rho, self.n_theta)

    @property
    def spacings(self) -> tuple[float, float]:
        dth = (self.theta1 - self.theta0) / (self.n_theta if self.periodic
                                             else self.n_theta - 1)
        return ((self.rho1 - self.rho0) / (self.n_rho - 1), dth)

    def _local(self) -> np.ndarray:
        rhos = np.linspace(self.rho0, self.rho1, self.n_rho)
        if self.periodic:
            thetas = self.theta0 + (self.theta1 - self.theta0) * \
                np.arange(self.n_theta) / self.n_theta
        else:
            thetas = np.linspace(self.theta0, self.theta1, self.n_theta)
        return np.exp(rhos[:, None] + 1j * thetas[None, :])

    def nodes(self) -> np.ndarray:
        t = self._local()
        if self.center_is_inf:
            return 1.0 / t
        return complex(self.center) + t

    def stretch(self) -> np.ndarray:
        t = np.abs(self._local())
        if self.center_is_inf:
            return 1.0 / t
        return t

    def contains(self, z: complex) -> bool:
        if is_infinite(z):
            return False
        t = 1.0 / complex(z) if self.center_is_inf else complex(z) - complex(self.center)
        if t == 0.0:
            return False
        return self.rho0 <= math.log(abs(t)) <= self.rho1

    def refined(self, factor: int = 2) -> "LogPolarChart":
        n_theta = self.n_theta * factor if self.periodic else (self.n_theta - 1) * factor + 1
        return LogPolarChart(self.center, self.rho0, self.rho1,
                             self.theta0, self.theta1,
                             (self.n_rho - 1) * factor + 1, n_theta,
                             self.periodic, self.branch, self.name)


Chart = RectChart | LogPolarChart


def require_simply_connected(chart: Chart, punctures=()) -> None:
    """Reject charts on which a single-valued lift cannot be propagated."""
    if isinstance(chart, LogPolarChart):
        if chart.periodic:
            raise ChartError(
                f"chart {chart.name!r} is a full annulus; lifts need an "
                "angular cut (theta span < 2*pi)")
        return
    for p in punctures:
        if chart.contains(p):
            raise ChartError(
                f"chart {chart.name!r} contains the puncture {p}; it is not "
                "simply connected (use an annular band with a cut)")


def quad_faces(shape: tuple[int, int], wrap_columns: bool = False) -> np.ndarray:
    """Row-major quad index list for a grid of the given node shape."""
    nr, nc = shape
    ii, jj = np.meshgrid(np.arange(nr - 1), np.arange(nc - 1 + int(wrap_columns)),
                         indexing="ij")
    j1 = (jj + 1) % nc
    a = ii * nc + jj
    b = ii * nc + j1
    c = (ii + 1) * nc + j1
    d = (ii + 1) * nc + jj
    return np.stack([a, b, c, d], axis=-1).reshape(-1, 4)
