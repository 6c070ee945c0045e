"""Power-rational maps z^alpha * P(z)/Q(z) on the Riemann sphere.

Every chart-level scalar used by the rest of the package (secondary Gauss
maps, Hopf densities, end data with fractional leading orders) is a map of
this form.  Polynomial coefficients are stored lowest degree first and kept
reduced: numerator and denominator share no root, the denominator is monic,
and alpha stays exactly 0.0 for purely rational maps.

Evaluation of z^alpha for non-integer alpha is branch-dependent; callers
supply a branch cut angle (the cut runs along direction e^{i*cut}) and the
default cut lies on the negative real axis.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import numpy.polynomial.polynomial as npoly

INF = complex(float("inf"), 0.0)
BRANCH_CUT_DEFAULT = math.pi

# Relative magnitude below which a trailing coefficient is treated as zero.
COEFF_TRIM_REL = 1e-13
# Root pairing tolerance for numerator/denominator cancellation.
ROOT_MATCH_REL = 1e-8
# Residual scale for the root-solver ill-conditioning warning.
ROOT_RESIDUAL_REL = 1e-8


class CriticalPointError(ArithmeticError):
    """Schwarzian derivative requested at a critical point."""


def is_infinite(w) -> bool:
    """True for the point-at-infinity marker (any non-finite complex)."""
    w = complex(w)
    return not (math.isfinite(w.real) and math.isfinite(w.imag))


def _as_coeffs(c) -> np.ndarray:
    a = np.atleast_1d(np.asarray(c, dtype=complex)).copy()
    if a.ndim != 1:
        raise ValueError("coefficient array must be one-dimensional")
    return a


def _trim(c: np.ndarray) -> np.ndarray:
    """Drop trailing coefficients that are zero relative to the largest."""
    top = np.abs(c).max(initial=0.0)
    if top == 0.0:
        return np.zeros(1, dtype=complex)
    keep = np.nonzero(np.abs(c) > COEFF_TRIM_REL * top)[0]
    return c[: keep[-1] + 1]


def _ord0(c: np.ndarray) -> int:
    """Order of vanishing at 0 (index of first non-negligible coefficient)."""
    top = np.abs(c).max(initial=0.0)
    if top == 0.0:
        raise ValueError("zero polynomial has no vanishing order")
    return int(np.nonzero(np.abs(c) > COEFF_TRIM_REL * top)[0][0])


def _deflate(c: np.ndarray, root: complex, times: int = 1) -> np.ndarray:
    out = c
    for _ in range(times):
        out, _rem = npoly.polydiv(out, np.array([-root, 1.0], dtype=complex))
    return _trim(np.asarray(out, dtype=complex))


def power_with_branch(z, alpha: float, branch: float = BRANCH_CUT_DEFAULT):
    """z**alpha with the branch cut along direction e^{i*branch}.

    The argument of z is taken in (branch - 2*pi, branch].  Integer alpha
    falls back to exact integer powers and needs no branch.  Accepts scalars
    or arrays; 0**alpha is 0 for alpha > 0, the infinity marker for
    alpha < 0, and 1 for alpha == 0.
    """
    if alpha == round(alpha):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.asarray(z, dtype=complex) ** int(round(alpha))
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    theta = np.angle(z)
    theta = branch - np.mod(branch - theta, 2.0 * math.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(alpha * (np.log(r) + 1j * theta))
        out = np.where(r == 0.0, np.where(alpha > 0, 0.0, INF), out)
    if out.ndim == 0:
        return complex(out)
    return out


class PowerRational:
    """The map z^alpha * P(z)/Q(z), reduced and with monic denominator."""

    def __init__(self, alpha: float, numer, denom=(1.0,)):
        self.alpha = float(alpha)
        numer = _trim(_as_coeffs(numer))
        denom = _trim(_as_coeffs(denom))
        if np.all(denom == 0.0):
            raise ZeroDivisionError("denominator polynomial is zero")
        numer, denom = self._reduce(numer, denom)
        lead = denom[-1]
        self.numer = numer / lead
        self.denom = denom / lead
        self.numer.flags.writeable = False
        self.denom.flags.writeable = False

    @staticmethod
    def _reduce(numer: np.ndarray, denom: np.ndarray):
        if np.abs(numer).max() == 0.0:
            return np.zeros(1, dtype=complex), np.ones(1, dtype=complex)
        # Exact monomial cancellation first, then clustered common roots.
        k = min(_ord0(numer), _ord0(denom))
        if k:
            numer, denom = numer[k:], denom[k:]
        if len(numer) > 1 and len(denom) > 1:
            nroots = list(npoly.polyroots(numer))
            droots = list(npoly.polyroots(denom))
            for r in nroots:
                tol = ROOT_MATCH_REL * (1.0 + abs(r))
                hits = [s for s in droots if abs(s - r) <= tol]
                if hits:
                    s = hits[0]
                    droots.remove(s)
                    shared = 0.5 * (r + s)
                    numer = _deflate(numer, shared)
                    denom = _deflate(denom, shared)
        return _trim(numer), _trim(denom)

    # -- basic queries ----------------------------------------------------

    @property
    def is_rational(self) -> bool:
        return self.alpha == 0.0

    @property
    def is_constant(self) -> bool:
        return self.alpha == 0.0 and len(self.numer) == 1 and len(self.denom) == 1

    def degree(self) -> int:
        """max(deg P, deg Q); the sphere-map degree for rational maps."""
        return max(len(self.numer), len(self.denom)) - 1

    def __repr__(self):
        return (f"PowerRational(alpha={self.alpha!r}, "
                f"numer={list(self.numer)!r}, denom={list(self.denom)!r})")

    def close_to(self, other: "PowerRational", tol: float = 1e-8) -> bool:
        """Componentwise comparison of the canonical representations."""
        if self.alpha != other.alpha:
            return False
        if len(self.numer) != len(other.numer) or len(self.denom) != len(other.denom):
            return False
        scale = max(np.abs(self.numer).max(), np.abs(other.numer).max(), 1.0)
        return bool(
            np.all(np.abs(self.numer - other.numer) <= tol * scale)
            and np.all(np.abs(self.denom - other.denom) <= tol)
        )

    # -- evaluation -------------------------------------------------------

    def __call__(self, z, branch: float = BRANCH_CUT_DEFAULT):
        scalar = np.ndim(z) == 0
        z = np.asarray(z, dtype=complex)
        num = npoly.polyval(z, self.numer)
        den = npoly.polyval(z, self.denom)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = num / den
            # A genuine pole evaluates to the infinity marker, not NaN.
            val = np.where((den == 0.0) & (num != 0.0), INF, val)
        if self.alpha != 0.0:
            val = val * power_with_branch(z, self.alpha, branch)
        if scalar:
            return complex(val)
        return val

    # -- algebra ----------------------------------------------------------

    def __neg__(self):
        return PowerRational(self.alpha, -self.numer, self.denom)

    def __mul__(self, other):
        if isinstance(other, PowerRational):
            return PowerRational(
                self.alpha + other.alpha,
                npoly.polymul(self.numer, other.numer),
                npoly.polymul(self.denom, other.denom),
            )
        return PowerRational(self.alpha, self.numer * complex(other), self.denom)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, PowerRational):
            return PowerRational(
                self.alpha - other.alpha,
                npoly.polymul(self.numer, other.denom),
                npoly.polymul(self.denom, other.numer),
            )
        return PowerRational(self.alpha, self.numer / complex(other), self.denom)

    def reciprocal(self):
        return PowerRational(-self.alpha, self.denom, self.numer)

    def __pow__(self, n: int):
        if n != int(n):
            raise ValueError("only integer powers are supported")
        n = int(n)
        if n < 0:
            return self.reciprocal() ** (-n)
        out = PowerRational(0.0, [1.0])
        for _ in range(n):
            out = out * self
        return out

    def derivative(self) -> "PowerRational":
        """Componentwise derivative; z^{3/2} maps to (3/2) z^{1/2}."""
        p, q = self.numer, self.denom
        dp, dq = npoly.polyder(p), npoly.polyder(q)
        wron = npoly.polysub(npoly.polymul(dp, q), npoly.polymul(p, dq))
        if self.alpha == 0.0:
            return PowerRational(0.0, wron, npoly.polymul(q, q))
        shifted = np.concatenate(([0.0], np.atleast_1d(wron)))
        numer = npoly.polyadd(self.alpha * npoly.polymul(p, q), shifted)
        return PowerRational(self.alpha - 1.0, numer, npoly.polymul(q, q))


def constant_map(value: complex) -> PowerRational:
    return PowerRational(0.0, [complex(value)])


def identity_map() -> PowerRational:
    return PowerRational(0.0, [0.0, 1.0])


# ---------------------------------------------------------------------------
# Roots of m(z) = w.


def polynomial_roots(coeffs) -> list[complex]:
    """All roots of a coefficient array (lowest degree first), polished.

    Companion-matrix eigenvalues followed by one guarded Newton step,
    returned sorted by (real, imag).  A cluster whose polished residual
    stays large relative to the coefficient scale triggers an
    ill-conditioning warning.
    """
    c = _trim(_as_coeffs(coeffs))
    if len(c) == 1:
        return []
    roots = np.atleast_1d(npoly.polyroots(c))
    dc = npoly.polyder(c)
    scale = np.abs(c).max()
    polished = []
    for r in roots:
        pv = npoly.polyval(r, c)
        dv = npoly.polyval(r, dc)
        if abs(dv) > 1e-30 * scale:
            step = pv / dv
            if abs(step) < 0.5 * (1.0 + abs(r)):
                r = r - step
        polished.append(complex(r))
    bad = [r for r in polished
           if abs(npoly.polyval(r, c)) > ROOT_RESIDUAL_REL * scale * (1.0 + abs(r)) ** len(c)]
    if bad:
        warnings.warn(f"ill-conditioned root cluster near {bad[0]:.6g}",
                      RuntimeWarning, stacklevel=2)
    return sorted(polished, key=lambda x: (x.real, x.imag))


def roots(m: PowerRational, w: complex) -> list[complex]:
    """Finite solutions of m(z) = w (with multiplicity) for rational m."""
    if not m.is_rational:
        raise ValueError("root solving requires a rational map (alpha == 0)")
    if is_infinite(w):
        raise ValueError("use the denominator's roots for preimages of infinity")
    c = npoly.polysub(m.numer, complex(w) * m.denom)
    c = _trim(np.atleast_1d(np.asarray(c, dtype=complex)))
    if len(c) == 1 and c[0] == 0.0:
        raise ValueError("m is constantly w; the preimage is the whole sphere")
    return polynomial_roots(c)


# ---------------------------------------------------------------------------
# Schwarzian derivative.


def _derivative_numerators(m: PowerRational, upto: int) -> list[np.ndarray]:
    """Numerators N_k of the derivative ladder, kept polynomial throughout.

    For rational m: m^(k) = N_k / Q^(k+1) with
    N_{k+1} = N_k' Q - (k+1) N_k Q'.  For fractional alpha:
    m^(k) = z^(alpha-k) N_k / Q^(k+1) with
    N_{k+1} = ((alpha-k) N_k + z N_k') Q - (k+1) z N_k Q'.
    Staying at the polynomial level matters: differentiating the reduced
    rational form twice would cancel a structural factor of Q by numerical
    root matching and contaminate the coefficients.
    """
    q = m.denom
    dq = npoly.polyder(q)
    out = [np.array(m.numer)]
    for k in range(upto):
        nk = out[-1]
        dn = np.atleast_1d(npoly.polyder(nk))
        if m.alpha == 0.0:
            nxt = npoly.polysub(npoly.polymul(dn, q),
                                (k + 1) * npoly.polymul(nk, dq))
        else:
            zdn = np.concatenate(([0.0], dn))
            zn = np.concatenate(([0.0], np.atleast_1d(nk)))
            nxt = npoly.polysub(
                npoly.polymul(npoly.polyadd((m.alpha - k) * nk, zdn), q),
                (k + 1) * npoly.polymul(zn, dq))
        out.append(np.atleast_1d(nxt))
    return out


def schwarzian(m: PowerRational, z, branch: float = BRANCH_CUT_DEFAULT):
    """(m''/m')' - (m''/m')^2 / 2, evaluated as m'''/m' - 1.5 (m''/m')^2.

    All z^alpha factors cancel, so the result is branch-independent (the
    Schwarzian of z^mu is rational even for fractional mu).
    """
    del branch
    n1, n2, n3 = _derivative_numerators(m, 3)[1:]
    diff = npoly.polysub(npoly.polymul(n3, n1), 1.5 * npoly.polymul(n2, n2))
    z = np.asarray(z, dtype=complex)
    v1 = npoly.polyval(z, n1)
    singular = v1 == 0.0
    if m.alpha != 0.0:
        singular = singular | (z == 0.0)
    if np.any(singular):
        raise CriticalPointError("Schwarzian derivative undefined at a critical point")
    q = npoly.polyval(z, m.denom)
    denom2 = (q * v1) ** 2
    if m.alpha != 0.0:
        denom2 = denom2 * z * z
    with np.errstate(divide="ignore", invalid="ignore"):
        out = npoly.polyval(z, diff) / denom2
    if not np.all(np.isfinite(np.asarray(out, dtype=complex))):
        raise CriticalPointError("Schwarzian derivative overflowed near a "
                                 "critical point or pole")
    if out.ndim == 0:
        return complex(out)
    return out


# ---------------------------------------------------------------------------
# Moebius action on values and on rational maps.


def mobius_value(mat, w):
    """Apply [[a,b],[c,d]] to a sphere point (finite or the infinity marker)."""
    a, b, c, d = np.asarray(mat, dtype=complex).ravel()
    if is_infinite(w):
        return a / c if c != 0.0 else INF
    w = complex(w)
    den = c * w + d
    if den == 0.0:
        return INF
    return (a * w + b) / den


def mobius_apply(mat, m: PowerRational) -> PowerRational:
    """Post-compose a rational map with the Moebius map of [[a,b],[c,d]]."""
    if not m.is_rational:
        raise ValueError("Moebius composition requires a rational map")
    a, b, c, d = np.asarray(mat, dtype=complex).ravel()
    numer = npoly.polyadd(a * m.numer, b * m.denom)
    denom = npoly.polyadd(c * m.numer, d * m.denom)
    return PowerRational(0.0, numer, denom)


def random_sl2(rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random complex 2x2 matrix normalized to determinant one."""
    while True:
        m = rng.normal(scale=scale, size=(2, 2)) + 1j * rng.normal(scale=scale, size=(2, 2))
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) > 1e-3:
            return m / np.sqrt(det)


# ---------------------------------------------------------------------------
# End expansions at a puncture.


@dataclass(frozen=True)
class EndExpansion:
    """Leading behavior of (g, f) in the local coordinate t at a puncture.

    g(t) = t^(1+beta) * g_hat(t) and f(t) = t^(-(1+I)) * f_hat(t) with
    g_hat, f_hat nonvanishing at t = 0; beta and big_i are the standard end
    invariants (orders shifted by one), g_hat0/f_hat0 the leading values.
    The hat callables evaluate in the local coordinate.  At the infinity
    puncture the local coordinate is t = 1/z and f transforms as a 1-form
    density (a factor -1/t^2).
    """

    beta: float
    big_i: float
    g_hat0: complex
    f_hat0: complex
    g_hat: Callable
    f_hat: Callable

    def __post_init__(self):
        if self.g_hat0 == 0.0 or self.f_hat0 == 0.0:
            raise ValueError("hat functions must not vanish at the puncture")


def localize(m: PowerRational, puncture) -> PowerRational:
    """Rewrite m in the local coordinate t at a puncture (t = z - p or 1/z).

    Only coordinate substitution; 1-form Jacobians are the caller's concern.
    """
    if is_infinite(puncture):
        p_rev = np.array(m.numer[::-1], dtype=complex)
        q_rev = np.array(m.denom[::-1], dtype=complex)
        gap = len(m.denom) - len(m.numer)
        if gap >= 0:
            p_rev = np.concatenate((np.zeros(gap, dtype=complex), p_rev))
        else:
            q_rev = np.concatenate((np.zeros(-gap, dtype=complex), q_rev))
        return PowerRational(-m.alpha, p_rev, q_rev)
    p = complex(puncture)
    if p == 0.0:
        return m
    if m.alpha != 0.0:
        raise ValueError("fractional-power data must place its branch point "
                         "at 0 or infinity")
    shift = npoly.Polynomial([p, 1.0])
    numer = npoly.Polynomial(m.numer)(shift).coef
    denom = npoly.Polynomial(m.denom)(shift).coef
    return PowerRational(0.0, numer, denom)


def localize_form(f: PowerRational, puncture) -> PowerRational:
    """Rewrite the 1-form density f(z) dz in the local coordinate."""
    if is_infinite(puncture):
        pulled = localize(f, puncture)
        # z = 1/t pulls dz back to -dt/t^2.
        return pulled * PowerRational(0.0, [-1.0], [0.0, 0.0, 1.0])
    return localize(f, puncture)


def order_at_zero(m: PowerRational) -> float:
    """Order of m at t = 0 (negative for poles, fractional when alpha is)."""
    if np.abs(m.numer).max() == 0.0:
        raise ValueError("the zero map has no order")
    return m.alpha + _ord0(m.numer) - _ord0(m.denom)


def leading_coefficient(m: PowerRational) -> complex:
    return complex(m.numer[_ord0(m.numer)] / m.denom[_ord0(m.denom)])


def _hat(m: PowerRational, order: float) -> PowerRational:
    """m(t) / t^order as a power-rational map in t."""
    return m * PowerRational(-order, [1.0])


def end_expansion(g: PowerRational, f: PowerRational, puncture,
                  bounded_gauge: bool = False) -> EndExpansion:
    """End data of (g, f dz) at a puncture.

    beta = ord(g) - 1 and big_i = -ord(f) - 1 in the local coordinate,
    orders taken exactly as the data presents them.  With bounded_gauge the
    unit-determinant gauge swap (g, f) -> (1/g, g^2 f) is applied first
    whenever g blows up at the puncture, which is the normalization the
    curvature-decay prediction needs.
    """
    g_loc = localize(g, puncture)
    f_loc = localize_form(f, puncture)
    if bounded_gauge and order_at_zero(g_loc) < 0:
        f_loc = g_loc * g_loc * f_loc
        g_loc = g_loc.reciprocal()
    og = order_at_zero(g_loc)
    of = order_at_zero(f_loc)
    g_hat = _hat(g_loc, og)
    f_hat = _hat(f_loc, of)
    return EndExpansion(
        beta=og - 1.0,
        big_i=-of - 1.0,
        g_hat0=leading_coefficient(g_loc),
        f_hat0=leading_coefficient(f_loc),
        g_hat=g_hat,
        f_hat=f_hat,
    )
