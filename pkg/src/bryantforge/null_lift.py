"""Null lifts: integrating dF = F A dz along paths and over chart grids.

The connection matrix A = [[g f, -g^2 f], [f, -g f]] is trace free, so the
lift F stays in SL(2, C); every accepted step renormalizes by 1/sqrt(det F)
to hold the determinant against roundoff drift.  The four entries of A are
kept as reduced products, which stay finite across a pole of g that is
compensated by a zero of f.

Data with a fractional power of z is continued analytically: path and grid
lifts track a continuous argument of z, so monodromy around the branch
point at 0 is well defined and does not depend on a branch cut.

Paths are polylines.  Grid lifts compute one transfer matrix per edge with
step-doubled RK4 (vectorized over all edges), compose them along a spanning
tree from the base node, and report the worst closure defect over the
off-tree edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import numpy.polynomial.polynomial as npoly

from .bryant_data import BryantData
from .grids import Chart, ChartError, require_simply_connected
from .meromorphic import BRANCH_CUT_DEFAULT, INF, PowerRational, is_infinite

LIFT_RTOL = 1e-10
LIFT_ATOL = 1e-12
EDGE_TOL = 1e-12
DET_TOL = 1e-9


class IntegrationError(RuntimeError):
    """The lift ODE could not be integrated along the requested path."""


# ---------------------------------------------------------------------------
# Paths.


@dataclass(frozen=True)
class PathSpec:
    """Polyline path; closed paths get an implicit edge back to the start."""

    vertices: tuple
    closed: bool = False

    def __post_init__(self):
        verts = tuple(complex(v) for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 2:
            raise ValueError("a path needs at least two vertices")
        walk = verts + (verts[0],) if self.closed else verts
        for a, b in zip(walk, walk[1:]):
            if a == b:
                raise ValueError("consecutive path vertices must be distinct")

    @property
    def walk(self) -> tuple:
        if self.closed:
            return self.vertices + (self.vertices[0],)
        return self.vertices


def segment_path(z0: complex, z1: complex) -> PathSpec:
    return PathSpec((complex(z0), complex(z1)))


def circle_path(center: complex, radius: float, n_vertices: int = 24,
                start_angle: float = 0.0) -> PathSpec:
    """Closed polygon inscribed in a circle (same homotopy class)."""
    angles = start_angle + 2.0 * math.pi * np.arange(n_vertices) / n_vertices
    verts = complex(center) + radius * np.exp(1j * angles)
    return PathSpec(tuple(verts), closed=True)


# ---------------------------------------------------------------------------
# The connection matrix and continued evaluation.


def _eval_continuous(m: PowerRational, z, theta):
    """m(z) with z^alpha = exp(alpha (log|z| + i theta)).

    theta must be a valid argument of z; integer alpha falls back to exact
    powers and ignores it.
    """
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        v = npoly.polyval(z, m.numer) / npoly.polyval(z, m.denom)
        if m.alpha != 0.0:
            if m.alpha == round(m.alpha):
                v = v * z ** int(round(m.alpha))
            else:
                v = v * np.exp(m.alpha * (np.log(np.abs(z)) + 1j * np.asarray(theta)))
    return v


def _continue_arg(z, ref):
    """The argument of z closest to the reference argument ref."""
    return ref + np.angle(np.asarray(z, dtype=complex) * np.exp(-1j * np.asarray(ref)))


def _branch_window_arg(z: complex, branch: float) -> float:
    theta = math.atan2(complex(z).imag, complex(z).real)
    return branch - (branch - theta) % (2.0 * math.pi)


class _ConnectionMatrix:
    """Evaluates A(z) = [[g f, -g^2 f], [f, -g f]] entrywise."""

    def __init__(self, data: BryantData):
        gf = data.g * data.f
        self.entries = (gf, -data.g_squared_f, data.f, -gf)
        self.fractional = any(e.alpha != round(e.alpha) for e in self.entries)

    def at(self, z, theta=0.0) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        vals = [np.broadcast_to(_eval_continuous(e, z, theta), z.shape)
                for e in self.entries]
        return np.stack(vals, axis=-1).reshape(z.shape + (2, 2))


# ---------------------------------------------------------------------------
# Adaptive path integration (embedded 4(5) pair, Dormand-Prince).

_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# Difference of the order-5 and order-4 weights; contracts the error estimate.
_DP_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

_MAX_STEPS_PER_SEGMENT = 20000
_MIN_STEP = 1e-13


def _identity() -> np.ndarray:
    return np.eye(2, dtype=complex)


def _check_unit_det(F: np.ndarray) -> np.ndarray:
    F = np.array(F, dtype=complex)
    if F.shape != (2, 2):
        raise ValueError("initial frame must be a 2 x 2 matrix")
    det = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
    if abs(det - 1.0) > 1e-8:
        raise ValueError(f"initial frame must have unit determinant, got {det:.6g}")
    return F


def _dopri_segment(conn: _ConnectionMatrix, z0: complex, z1: complex,
                   F: np.ndarray, theta: float, rtol: float, atol: float,
                   label: str):
    dz = z1 - z0

    def deriv(s: float, Fs: np.ndarray) -> np.ndarray:
        z = z0 + s * dz
        th = _continue_arg(z, theta) if conn.fractional else 0.0
        A = conn.at(z, th)
        if not np.all(np.isfinite(A)):
            raise IntegrationError(
                f"singular connection at z = {z:.6g} on segment {label}")
        return (Fs @ A) * dz

    s = 0.0
    h = 1.0
    k: list = [deriv(0.0, F)] + [None] * 6
    for _ in range(_MAX_STEPS_PER_SEGMENT):
        if s >= 1.0 - 1e-15:
            return F, theta
        h = min(h, 1.0 - s)
        if conn.fractional:
            # Cap the step so the argument swings less than pi/2 and the
            # step region stays clear of the branch point.
            zc = z0 + s * dz
            cap = 0.4 * abs(zc) / abs(dz)
            if cap < _MIN_STEP:
                raise IntegrationError(
                    f"path runs into the branch point at 0 on segment {label}")
            h = min(h, cap)
        for i in range(1, 7):
            Fi = F + h * sum(a * k[j] for j, a in enumerate(_DP_A[i]) if a != 0.0)
            if i < 6:
                k[i] = deriv(s + _DP_C[i] * h, Fi)
            else:
                F5 = Fi
                k[6] = deriv(s + h, F5)
        err_mat = h * sum(e * k[j] for j, e in enumerate(_DP_E) if e != 0.0)
        scale = atol + rtol * np.maximum(np.abs(F), np.abs(F5))
        err = float(np.max(np.abs(err_mat) / scale))
        if err <= 1.0:
            s += h
            if conn.fractional:
                theta = float(_continue_arg(z0 + s * dz, theta))
            det = F5[0, 0] * F5[1, 1] - F5[0, 1] * F5[1, 0]
            F = F5 / np.sqrt(det)
            k[0] = deriv(s, F)
        factor = 0.9 * err ** -0.2 if err > 0.0 else 5.0
        h *= min(5.0, max(0.2, factor))
        if h < _MIN_STEP:
            raise IntegrationError(
                f"step underflow near z = {z0 + s * dz:.6g} on segment {label}")
    raise IntegrationError(f"step budget exhausted on segment {label}")


def _integrate_with_arg(data: BryantData, path: PathSpec, F0, branch: float,
                        rtol: float, atol: float):
    conn = _ConnectionMatrix(data)
    walk = path.walk
    for p in data.punctures:
        if is_infinite(p):
            continue
        for v in walk:
            if abs(v - complex(p)) <= 1e-12 * (1.0 + abs(p)):
                raise ValueError(f"path vertex {v} sits on the puncture {p}")
    F = _identity() if F0 is None else _check_unit_det(F0)
    theta = _branch_window_arg(walk[0], branch) if conn.fractional else 0.0
    for i, (a, b) in enumerate(zip(walk, walk[1:])):
        label = f"{i} ({a:.6g} -> {b:.6g})"
        F, theta = _dopri_segment(conn, a, b, F, theta, rtol, atol, label)
    return F, theta


def integrate_path(data: BryantData, path: PathSpec, F0=None,
                   branch: float = BRANCH_CUT_DEFAULT,
                   rtol: float = LIFT_RTOL, atol: float = LIFT_ATOL) -> np.ndarray:
    """Frame at the end of the path, starting from F0 (default: identity).

    Adaptive embedded 4(5) steps with determinant renormalization after
    every accepted step.  Fails with IntegrationError, naming the offending
    segment, if the path runs into a singularity of the connection.
    """
    F, _ = _integrate_with_arg(data, path, F0, branch, rtol, atol)
    return F


# ---------------------------------------------------------------------------
# Monodromy.


class MonodromyKind(Enum):
    TRIVIAL = "Trivial"
    ELLIPTIC = "Elliptic"
    HYPERBOLIC = "Hyperbolic"
    PARABOLIC = "Parabolic"


@dataclass(frozen=True)
class MonodromyClass:
    matrix: np.ndarray
    kind: MonodromyKind
    trace: complex
    nonreal_trace: bool


def classify_monodromy(matrix) -> MonodromyClass:
    """Conjugacy class of an SL(2, C) monodromy from its trace.

    Within tolerance of +-identity the class is Trivial; otherwise |trace|
    below 2 is Elliptic, above 2 Hyperbolic, and at 2 Parabolic.  A trace
    with a significant imaginary part cannot come from SU(1,1) or SU(2)
    data, so it raises the nonreal_trace flag.
    """
    M = np.asarray(matrix, dtype=complex)
    tr = complex(M[0, 0] + M[1, 1])
    tol = 1e-6 * (1.0 + abs(tr))
    eye = np.eye(2)
    if np.abs(M - eye).max() <= tol or np.abs(M + eye).max() <= tol:
        kind = MonodromyKind.TRIVIAL
    elif abs(abs(tr) - 2.0) <= tol:
        kind = MonodromyKind.PARABOLIC
    elif abs(tr) < 2.0:
        kind = MonodromyKind.ELLIPTIC
    else:
        kind = MonodromyKind.HYPERBOLIC
    return MonodromyClass(matrix=M, kind=kind, trace=tr,
                          nonreal_trace=abs(tr.imag) > tol)


def monodromy(data: BryantData, loop: PathSpec, F0=None,
              branch: float = BRANCH_CUT_DEFAULT,
              rtol: float = LIFT_RTOL, atol: float = LIFT_ATOL) -> MonodromyClass:
    """Classified monodromy Phi = F0^{-1} F_end of one turn around the loop."""
    if not loop.closed:
        raise ValueError("monodromy needs a closed loop")
    F_end = integrate_path(data, loop, F0, branch, rtol, atol)
    F0m = _identity() if F0 is None else _check_unit_det(F0)
    inv = np.array([[F0m[1, 1], -F0m[0, 1]], [-F0m[1, 0], F0m[0, 0]]])
    det = F0m[0, 0] * F0m[1, 1] - F0m[0, 1] * F0m[1, 0]
    return classify_monodromy((inv / det) @ F_end)


# ---------------------------------------------------------------------------
# Grid lifts.


@dataclass(eq=False)
class LiftGrid:
    """Frames at every chart node, plus the closure diagnostic."""

    data: BryantData
    chart: Chart
    frames: np.ndarray
    base_index: tuple[int, int]
    closure_residual: float
    theta: np.ndarray | None = None

    def g_values(self) -> np.ndarray:
        """g at the nodes, on the same analytic branch as the frames."""
        z = self.chart.nodes()
        if self.theta is not None:
            return np.asarray(_eval_continuous(self.data.g, z, self.theta))
        return np.asarray(self.data.g(z, self.chart.branch))

    def gauss_map(self) -> np.ndarray:
        """Hyperbolic Gauss map at the nodes."""
        return hyperbolic_gauss(self.frames, self.g_values())


def _rk4_chain(conn: _ConnectionMatrix, z0s, z1s, theta0s, n: int) -> np.ndarray:
    n_edges = len(z0s)
    T = np.zeros((n_edges, 2, 2), dtype=complex)
    T[:, 0, 0] = T[:, 1, 1] = 1.0
    dz = (z1s - z0s) / n
    dzc = dz[:, None, None]

    def A_at(zp):
        th = _continue_arg(zp, theta0s) if conn.fractional else 0.0
        return conn.at(zp, th)

    A_right = A_at(z0s)
    for step in range(n):
        za = z0s + step * dz
        Aa = A_right
        Am = A_at(za + 0.5 * dz)
        A_right = A_at(za + dz)
        k1 = T @ Aa
        k2 = (T + 0.5 * dzc * k1) @ Am
        k3 = (T + 0.5 * dzc * k2) @ Am
        k4 = (T + dzc * k3) @ A_right
        T = T + dzc / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(T)):
        raise IntegrationError("an edge transfer hit a singularity of the "
                               "connection; move the chart off the poles")
    det = T[:, 0, 0] * T[:, 1, 1] - T[:, 0, 1] * T[:, 1, 0]
    return T / np.sqrt(det)[:, None, None]


def _edge_transfers(conn: _ConnectionMatrix, z0s, z1s, theta0s,
                    tol: float) -> np.ndarray:
    prev = _rk4_chain(conn, z0s, z1s, theta0s, 4)
    n = 4
    while n < 1024:
        n *= 2
        cur = _rk4_chain(conn, z0s, z1s, theta0s, n)
        scale = np.maximum(1.0, np.abs(cur).max(axis=(-2, -1), keepdims=True))
        err = float(np.max(np.abs(cur - prev) / scale))
        if err <= tol:
            return cur
        prev = cur
    raise IntegrationError(
        f"edge transfers still moving at 1024 substeps (defect {err:.3g}); "
        "the chart probably crosses a singularity")


def _sl2_inv(T: np.ndarray) -> np.ndarray:
    out = np.empty_like(T)
    out[..., 0, 0] = T[..., 1, 1]
    out[..., 1, 1] = T[..., 0, 0]
    out[..., 0, 1] = -T[..., 0, 1]
    out[..., 1, 0] = -T[..., 1, 0]
    return out


def lift_on_grid(data: BryantData, chart: Chart, base=None, F0=None,
                 edge_tol: float = EDGE_TOL) -> LiftGrid:
    """Frames at every node of a simply connected chart.

    One transfer matrix per grid edge (step-doubled RK4 until the doubling
    defect is below edge_tol), composed along the spanning tree rooted at
    the node nearest the base point: along the base row first, then down
    and up the columns.  The reported closure residual is the worst
    mismatch F[left] T_edge vs F[right] over the edges the tree skipped;
    path independence on a clean chart pushes it to integration error.
    """
    conn = _ConnectionMatrix(data)
    require_simply_connected(chart, data.punctures)
    if conn.fractional and chart.contains(0.0):
        raise ChartError(
            f"chart {chart.name!r} contains the branch point 0 of the "
            "fractional-power data; use a log-polar band around 0")
    z = chart.nodes()
    ny, nx = chart.shape

    theta = None
    if conn.fractional:
        theta = np.angle(z)
        theta[0] = np.unwrap(theta[0])
        theta = np.unwrap(theta, axis=0)

    if base is None:
        bi, bj = 0, 0
    else:
        base = complex(base)
        if not chart.contains(base):
            raise ChartError(f"base point {base} lies outside chart {chart.name!r}")
        flat = int(np.argmin(np.abs(z - base)))
        bi, bj = divmod(flat, nx)
    if theta is not None:
        want = _branch_window_arg(z[bi, bj], chart.branch)
        theta = theta + 2.0 * math.pi * round((want - theta[bi, bj])
                                              / (2.0 * math.pi))

    zeros = np.zeros(z.shape)
    th_grid = theta if theta is not None else zeros
    hz0, hz1 = z[:, :-1].ravel(), z[:, 1:].ravel()
    vz0, vz1 = z[:-1, :].ravel(), z[1:, :].ravel()
    hth = th_grid[:, :-1].ravel()
    vth = th_grid[:-1, :].ravel()
    n_h = hz0.size
    T = _edge_transfers(conn,
                        np.concatenate([hz0, vz0]),
                        np.concatenate([hz1, vz1]),
                        np.concatenate([hth, vth]), edge_tol)
    Th = T[:n_h].reshape(ny, nx - 1, 2, 2)
    Tv = T[n_h:].reshape(ny - 1, nx, 2, 2)

    F = np.empty((ny, nx, 2, 2), dtype=complex)
    F[bi, bj] = _identity() if F0 is None else _check_unit_det(F0)
    for j in range(bj, nx - 1):
        F[bi, j + 1] = F[bi, j] @ Th[bi, j]
    for j in range(bj, 0, -1):
        F[bi, j - 1] = F[bi, j] @ _sl2_inv(Th[bi, j - 1])
    for i in range(bi, ny - 1):
        F[i + 1] = F[i] @ Tv[i]
    for i in range(bi, 0, -1):
        F[i - 1] = F[i] @ _sl2_inv(Tv[i - 1])

    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    F = F / np.sqrt(det)[..., None, None]

    predicted = F[:, :-1] @ Th
    scale = np.maximum(1.0, np.abs(F[:, 1:]).max(axis=(-2, -1), keepdims=True))
    residual = float(np.max(np.abs(predicted - F[:, 1:]) / scale))

    F.flags.writeable = False
    return LiftGrid(data=data, chart=chart, frames=F, base_index=(bi, bj),
                    closure_residual=residual, theta=theta)


# ---------------------------------------------------------------------------
# Gauss maps from the lift.


def hyperbolic_gauss(F, g_at_z):
    """Moebius action (a g + b) / (c g + d) of the frame on g.

    Equals the derivative ratio dA/dC of the frame entries.  Accepts any
    matching leading shapes; the infinity marker is handled projectively on
    both sides.
    """
    F = np.asarray(F, dtype=complex)
    g = np.asarray(g_at_z, dtype=complex)
    a, b = F[..., 0, 0], F[..., 0, 1]
    c, d = F[..., 1, 0], F[..., 1, 1]
    at_inf = ~np.isfinite(g)
    gg = np.where(at_inf, 0.0, g)
    num = np.where(at_inf, a, a * gg + b)
    den = np.where(at_inf, c, c * gg + d)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
        out = np.where((den == 0.0) & (num != 0.0), INF, out)
    if out.ndim == 0:
        return complex(out)
    return out


def secondary_gauss_check(lift: LiftGrid, data: BryantData | None = None) -> float:
    """Worst interior-node defect of the recovery g = -dB/dA from the frames.

    A and B are the first-row entries of the lifted frame; the complex
    derivative is taken with a fourth-order stencil along the columns axis
    (the chart Jacobian cancels in the ratio).  Nodes where g is infinite
    are skipped.
    """
    if data is None:
        data = lift.data
    a = lift.frames[..., 0, 0]
    b = lift.frames[..., 0, 1]

    def d_cols(u):
        return -u[:, 4:] + 8.0 * u[:, 3:-1] - 8.0 * u[:, 1:-3] + u[:, :-4]

    db = d_cols(b)
    da = d_cols(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        # dB vanishing identically (constant-g data) recovers g = 0.
        g_fd = np.where(db == 0.0, 0.0, -db / da)
    g_ref = lift.g_values()[:, 2:-2]
    ok = np.isfinite(g_ref) & np.isfinite(g_fd)
    if not ok.any():
        raise ValueError("no interior nodes with finite g to check against")
    return float(np.abs(np.where(ok, g_fd - g_ref, 0.0)).max())


class TransportedGauss:
    """Hyperbolic Gauss map as a function of z, transported from a base.

    Every call integrates the lift along the straight segment from the base
    point, so values are well defined on any star-shaped region around the
    base that avoids the singularities of the connection.
    """

    def __init__(self, data: BryantData, base: complex, F0=None,
                 branch: float = BRANCH_CUT_DEFAULT,
                 rtol: float = LIFT_RTOL, atol: float = LIFT_ATOL):
        self.data = data
        self.base = complex(base)
        self.branch = float(branch)
        self.rtol = rtol
        self.atol = atol
        self._F0 = _identity() if F0 is None else _check_unit_det(F0)
        self._fractional = _ConnectionMatrix(data).fractional

    def __call__(self, z: complex) -> complex:
        z = complex(z)
        if z == self.base:
            F, theta = self._F0, _branch_window_arg(z, self.branch)
        else:
            F, theta = _integrate_with_arg(
                self.data, segment_path(self.base, z), self._F0,
                self.branch, self.rtol, self.atol)
        if self._fractional:
            gval = complex(np.asarray(_eval_continuous(self.data.g, z, theta)))
        else:
            gval = self.data.g(z, self.branch)
        return hyperbolic_gauss(F, gval)


# ---------------------------------------------------------------------------
# Plain-text export of a frame field.


def sl2_field_lines(frames: np.ndarray) -> list[str]:
    """One line per node: flat row-major index and 8 reals (a b c d parts)."""
    rows = np.asarray(frames, dtype=complex).reshape(-1, 4)
    lines = []
    for i, (a, b, c, d) in enumerate(rows):
        vals = (a.real, a.imag, b.real, b.imag, c.real, c.imag, d.real, d.imag)
        lines.append(str(i) + " " + " ".join(f"{v:.12g}" for v in vals))
    return lines
