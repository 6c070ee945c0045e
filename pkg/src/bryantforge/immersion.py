"""Immersions from the lift: F F* into hyperbolic space, F e3 F* into
de Sitter space, with Lorentz and Poincare-ball coordinates and a
finite-difference verification of the induced metric.

Points of both target spaces are Hermitian 2 x 2 matrices; the Minkowski
pairing is -1/2 tr(X adj(Y)), the polarization of -det.  Hyperbolic points
have det 1 and positive trace, de Sitter points det -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import bryant_data as bd
from .bryant_data import BryantData, Target
from .grids import Chart, quad_faces
from .null_lift import LiftGrid, lift_on_grid

DET_DRIFT_TOL = 1e-8
# De Sitter nodes with |1 - |g|^2| below this are treated as part of the
# degenerate ring and excluded from relative-residual checks; the relative
# defect of a second-order stencil grows like h^2 / (1 - |g|^2)^2 there.
RING_MARGIN = 0.6


@dataclass(frozen=True)
class HermPoint:
    """Hermitian matrix [[h11, h12], [conj(h12), h22]]."""

    h11: float
    h22: float
    h12: complex

    def matrix(self) -> np.ndarray:
        return np.array([[self.h11, self.h12],
                         [np.conjugate(self.h12), self.h22]], dtype=complex)

    @property
    def det(self) -> float:
        return self.h11 * self.h22 - abs(self.h12) ** 2


@dataclass(frozen=True)
class LorentzVector:
    x0: float
    x1: float
    x2: float
    x3: float

    @property
    def norm2(self) -> float:
        """Minkowski square -x0^2 + x1^2 + x2^2 + x3^2."""
        return -self.x0 ** 2 + self.x1 ** 2 + self.x2 ** 2 + self.x3 ** 2


# ---------------------------------------------------------------------------
# Hermitian squares of frames.


def _check_frame_det(F: np.ndarray):
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    drift = np.abs(det - 1.0).max()
    if drift > DET_DRIFT_TOL:
        raise ValueError(f"frame determinant drifted to 1 + {drift:.3g}")


def hermitian_square(frames: np.ndarray, target: Target) -> np.ndarray:
    """F F* for hyperbolic targets, F e3 F* for de Sitter, vectorized."""
    F = np.asarray(frames, dtype=complex)
    _check_frame_det(F)
    Fs = np.conjugate(np.swapaxes(F, -1, -2))
    if target is Target.DE_SITTER:
        core = F.copy()
        core[..., :, 1] = -core[..., :, 1]
        return core @ Fs
    return F @ Fs


def to_hyperbolic(F) -> HermPoint:
    """The hyperbolic point F F* of a unit-determinant frame."""
    phi = hermitian_square(np.asarray(F, dtype=complex), Target.HYPERBOLIC)
    return HermPoint(h11=float(phi[0, 0].real), h22=float(phi[1, 1].real),
                     h12=complex(phi[0, 1]))


def to_desitter(F) -> HermPoint:
    """The de Sitter point F e3 F* of a unit-determinant frame."""
    phi = hermitian_square(np.asarray(F, dtype=complex), Target.DE_SITTER)
    return HermPoint(h11=float(phi[0, 0].real), h22=float(phi[1, 1].real),
                     h12=complex(phi[0, 1]))


# ---------------------------------------------------------------------------
# Coordinates and the pairing.


def herm_to_lorentz(X: HermPoint) -> LorentzVector:
    return LorentzVector(x0=0.5 * (X.h11 + X.h22), x1=X.h12.real,
                         x2=X.h12.imag, x3=0.5 * (X.h11 - X.h22))


def lorentz_to_herm(x: LorentzVector) -> HermPoint:
    return HermPoint(h11=x.x0 + x.x3, h22=x.x0 - x.x3,
                     h12=complex(x.x1, x.x2))


def lorentz_coordinates(phi: np.ndarray) -> np.ndarray:
    """(..., 4) array of (x0, x1, x2, x3) from (..., 2, 2) Hermitian points."""
    phi = np.asarray(phi, dtype=complex)
    h11 = phi[..., 0, 0].real
    h22 = phi[..., 1, 1].real
    h12 = phi[..., 0, 1]
    return np.stack([0.5 * (h11 + h22), h12.real, h12.imag,
                     0.5 * (h11 - h22)], axis=-1)


def minkowski_product(x, y) -> np.ndarray:
    """-x0 y0 + x1 y1 + x2 y2 + x3 y3 on (..., 4) coordinate arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (-x[..., 0] * y[..., 0] + x[..., 1] * y[..., 1]
            + x[..., 2] * y[..., 2] + x[..., 3] * y[..., 3])


def lorentz_pairing(X, Y) -> np.ndarray:
    """-1/2 tr(X adj(Y)) on (..., 2, 2) matrices; equals -det on the diagonal.

    This is the polarization of the quadratic form -det, i.e. the Minkowski
    pairing in the Hermitian-matrix picture; it applies to tangent matrices
    as well as to points.
    """
    X = np.asarray(X, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    tr = (X[..., 0, 0] * Y[..., 1, 1] - X[..., 0, 1] * Y[..., 1, 0]
          - X[..., 1, 0] * Y[..., 0, 1] + X[..., 1, 1] * Y[..., 0, 0])
    return -0.5 * tr.real


def to_poincare_ball(x: LorentzVector) -> np.ndarray:
    """(x1, x2, x3) / (1 + x0); defined on the hyperbolic hyperboloid only."""
    if abs(x.norm2 + 1.0) > 1e-6 or x.x0 <= 0.0:
        raise ValueError("Poincare ball coordinates need a point on the "
                         "hyperbolic hyperboloid (norm -1, x0 > 0)")
    return np.array([x.x1, x.x2, x.x3]) / (1.0 + x.x0)


def poincare_ball_coordinates(lorentz: np.ndarray) -> np.ndarray:
    """Vectorized ball coordinates for (..., 4) hyperboloid points."""
    x = np.asarray(lorentz, dtype=float)
    return x[..., 1:] / (1.0 + x[..., 0:1])


# ---------------------------------------------------------------------------
# Immersed grids.


@dataclass(eq=False)
class ImmersedGrid:
    """Frames and their Hermitian squares over one chart."""

    lift: LiftGrid
    phi: np.ndarray

    @property
    def data(self) -> BryantData:
        return self.lift.data

    @property
    def chart(self) -> Chart:
        return self.lift.chart

    def lorentz(self) -> np.ndarray:
        return lorentz_coordinates(self.phi)


def immerse(data: BryantData, chart: Chart, base=None, F0=None) -> ImmersedGrid:
    lift = lift_on_grid(data, chart, base=base, F0=F0)
    return ImmersedGrid(lift=lift, phi=hermitian_square(lift.frames, data.target))


# ---------------------------------------------------------------------------
# Metric verification.


def _ring_exclusion(data: BryantData, chart: Chart,
                    ring_margin: float) -> np.ndarray:
    """Node mask near the de Sitter degenerate set, stencil-dilated."""
    z = chart.nodes()
    with np.errstate(over="ignore", invalid="ignore"):
        gap = np.abs(np.abs(np.asarray(data.g(z, chart.branch))) ** 2 - 1.0)
    near = ~np.isfinite(gap) | (gap < ring_margin)
    cells = bd.singular_locus(data, chart)
    near[:-1, :-1] |= cells
    near[:-1, 1:] |= cells
    near[1:, :-1] |= cells
    near[1:, 1:] |= cells
    # one more ring of nodes so central stencils never touch the excluded set
    out = near.copy()
    out[:, 1:] |= near[:, :-1]
    out[:, :-1] |= near[:, 1:]
    out[1:, :] |= near[:-1, :]
    out[:-1, :] |= near[1:, :]
    return out


def pullback_metric_check(imm: ImmersedGrid, data: BryantData | None = None,
                          ring_margin: float = RING_MARGIN) -> float:
    """Max relative defect of the induced metric against the closed form.

    Differentiates phi by central differences along both chart axes and
    compares the Lorentz pairings with the conformal density: both diagonal
    coefficients must equal the density, the mixed one must vanish.  The
    density is taken in chart coordinates (the conformal stretch of the
    chart enters squared).  De Sitter grids exclude nodes on or near the
    degenerate |g| = 1 ring, where a relative comparison is meaningless.
    """
    if data is None:
        data = imm.data
    chart = imm.chart
    if chart.periodic:
        raise ValueError("metric checks expect a plain (non-periodic) chart")
    phi = imm.phi
    hr, hc = chart.spacings
    du = (phi[1:-1, 2:] - phi[1:-1, :-2]) / (2.0 * hc)
    dv = (phi[2:, 1:-1] - phi[:-2, 1:-1]) / (2.0 * hr)
    e_uu = lorentz_pairing(du, du)
    e_vv = lorentz_pairing(dv, dv)
    e_uv = lorentz_pairing(du, dv)

    z = chart.nodes()
    lam2 = np.asarray(bd.metric_density(data, z, chart.branch))
    lam2 = (lam2 * chart.stretch() ** 2)[1:-1, 1:-1]

    keep = np.ones_like(lam2, dtype=bool)
    if data.target is Target.DE_SITTER:
        keep = ~_ring_exclusion(data, chart, ring_margin)[1:-1, 1:-1]
        if not keep.any():
            raise ValueError("every interior node sits on the degenerate "
                             "ring; enlarge the chart")
    resid = np.maximum(np.abs(e_uu - lam2), np.abs(e_vv - lam2))
    resid = np.maximum(resid, np.abs(e_uv))
    scale = np.where(lam2 > 0.0, lam2, 1.0)
    return float((resid / scale)[keep].max())


# ---------------------------------------------------------------------------
# Mesh export.


@dataclass(eq=False)
class MeshSurface:
    """Vertex array, quad faces, and named per-vertex scalars."""

    vertices: np.ndarray
    faces: np.ndarray
    scalars: dict


def _finite(values: np.ndarray, cap: float = 1e30) -> np.ndarray:
    out = np.asarray(values, dtype=float).copy()
    out[~np.isfinite(out)] = cap
    return np.clip(out, -cap, cap)


def make_mesh(imm: ImmersedGrid) -> MeshSurface:
    """Row-major mesh of the immersed grid.

    Hyperbolic surfaces are exported in Poincare-ball coordinates with
    kappa, lambda2, absg and a zero singular flag.  De Sitter surfaces stay
    in Lorentz coordinates (x1, x2, x3), carry x0 as a scalar, and flag the
    vertices of degenerate cells instead of dropping them.
    """
    data = imm.data
    chart = imm.chart
    z = chart.nodes()
    lorentz = imm.lorentz()
    lam2 = np.asarray(bd.metric_density(data, z, chart.branch), dtype=float)
    with np.errstate(over="ignore"):
        absg = np.abs(np.asarray(data.g(z, chart.branch)))
    faces = quad_faces(chart.shape, wrap_columns=chart.periodic)

    if data.target is Target.DE_SITTER:
        verts = lorentz[..., 1:].reshape(-1, 3)
        flag = np.zeros(chart.shape, dtype=float)
        cells = bd.singular_locus(data, chart)
        if chart.periodic:
            rolled = np.roll(cells, 1, axis=1)
            flag[:-1, :] += cells + rolled
            flag[1:, :] += cells + rolled
        else:
            flag[:-1, :-1] += cells
            flag[:-1, 1:] += cells
            flag[1:, :-1] += cells
            flag[1:, 1:] += cells
        scalars = {
            "x0": lorentz[..., 0].reshape(-1),
            "lambda2": _finite(lam2).reshape(-1),
            "absg": _finite(absg).reshape(-1),
            "singular": (flag > 0.0).astype(float).reshape(-1),
        }
        return MeshSurface(vertices=verts, faces=faces, scalars=scalars)

    kappa = np.asarray(bd.gauss_curvature(data, z, chart.branch), dtype=float)
    verts = poincare_ball_coordinates(lorentz).reshape(-1, 3)
    scalars = {
        "kappa": _finite(kappa).reshape(-1),
        "lambda2": _finite(lam2).reshape(-1),
        "absg": _finite(absg).reshape(-1),
        "singular": np.zeros(verts.shape[0]),
    }
    return MeshSurface(vertices=verts, faces=faces, scalars=scalars)


def ply_text(mesh: MeshSurface) -> str:
    """Deterministic ASCII PLY: row-major vertices, then quad faces."""
    n_vert = mesh.vertices.shape[0]
    names = list(mesh.scalars)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {n_vert}",
        "property float x",
        "property float y",
        "property float z",
    ]
    lines += [f"property float {name}" for name in names]
    lines += [
        f"element face {mesh.faces.shape[0]}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    cols = [mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.vertices[:, 2]]
    cols += [np.asarray(mesh.scalars[name], dtype=float) for name in names]
    for i in range(n_vert):
        lines.append(" ".join(f"{col[i]:.9g}" for col in cols))
    for face in mesh.faces:
        lines.append("4 " + " ".join(str(int(v)) for v in face))
    return "\n".join(lines) + "\n"


def write_ply(mesh: MeshSurface, path) -> None:
    with open(path, "w", encoding="ascii") as handle:
        handle.write(ply_text(mesh))
