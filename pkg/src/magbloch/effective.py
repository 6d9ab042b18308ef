"""Effective one-band Peierls symbols: h0 and the subprincipal correction h1.

For a single isolated band with canonical-gauge frame phi and energy E over
the torus, slowly varying fields Phi(r), A(r) produce the effective symbol

    h0(k, r) = E(k - A(r)) + Phi(r)
    h1(k, r) = A_berry(k, r) . (B(r) grad_E(kt)^perp - grad_Phi(r))
               + B(r) * M(kt),     kt = k - A(r)

with the Berry connection coefficients A_berry assembled from
A_1(kt) gamma_1 + (A_2(kt) - theta/(2 pi) <k, gamma_1>) gamma_2 and the
Rammal-Wilkinson term M(k) = -Im <d1 phi, (H - E) d2 phi>.

The h1 formula holds in the gauge A . e2 = 0 (vector potential along the
first lattice direction); evaluating it with fields that violate the gauge
is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import ProjectorFamily, build_frame, transition_function
from .errors import NumericValidityError
from .interp import PeriodicSpline1D, PeriodicSpline2D
from .linalg import eigvalsh_many

GAUGE_TOL = 1e-10
FD_STEP = 1e-6
B_CONSISTENCY_TOL = 1e-6


@dataclass(frozen=True)
class SlowFields:
    """Slowly varying scalar and vector potentials Phi, A with B = curl A.

    Evaluators are vectorized over r of shape (..., 2).  When analytic
    gradients are not supplied, central finite differences with step 1e-6
    are used and the stated B is checked against curl A.
    """

    phi: object
    a: object
    b: object
    grad_phi: object

    def curl_defect(self, samples=32, seed=3):
        """Max |B(r) - (d1 A2 - d2 A1)(r)| over random sample points."""
        rng = np.random.default_rng(seed)
        rs = rng.uniform(-3.0, 3.0, size=(samples, 2))
        e1 = np.array([FD_STEP, 0.0])
        e2 = np.array([0.0, FD_STEP])
        da2 = (self.a(rs + e1)[..., 1] - self.a(rs - e1)[..., 1]) / (2 * FD_STEP)
        da1 = (self.a(rs + e2)[..., 0] - self.a(rs - e2)[..., 0]) / (2 * FD_STEP)
        return float(np.max(np.abs(self.b(rs) - (da2 - da1))))

    def a2_defect(self, samples=32, seed=4):
        """Max |A_2(r)| over random sample points (gauge check for h1)."""
        rng = np.random.default_rng(seed)
        rs = rng.uniform(-3.0, 3.0, size=(samples, 2))
        return float(np.max(np.abs(self.a(rs)[..., 1])))


def slow_fields(phi=None, a=None, b=None, grad_phi=None):
    """Build :class:`SlowFields`, filling gradients by finite differences."""

    def zero_scalar(r):
        return np.zeros(np.shape(r)[:-1])

    def zero_vector(r):
        return np.zeros(np.shape(r))

    phi = phi if phi is not None else zero_scalar
    a = a if a is not None else zero_vector

    if grad_phi is None:
        def grad_phi(r, _phi=phi):
            r = np.asarray(r, dtype=float)
            e1 = np.array([FD_STEP, 0.0])
            e2 = np.array([0.0, FD_STEP])
            g1 = (_phi(r + e1) - _phi(r - e1)) / (2 * FD_STEP)
            g2 = (_phi(r + e2) - _phi(r - e2)) / (2 * FD_STEP)
            return np.stack([g1, g2], axis=-1)

    if b is None:
        def b(r, _a=a):
            r = np.asarray(r, dtype=float)
            e1 = np.array([FD_STEP, 0.0])
            e2 = np.array([0.0, FD_STEP])
            da2 = (_a(r + e1)[..., 1] - _a(r - e1)[..., 1]) / (2 * FD_STEP)
            da1 = (_a(r + e2)[..., 0] - _a(r - e2)[..., 0]) / (2 * FD_STEP)
            return da2 - da1

    fields = SlowFields(phi=phi, a=a, b=b, grad_phi=grad_phi)
    defect = fields.curl_defect()
    if defect > B_CONSISTENCY_TOL:
        raise NumericValidityError(
            f"stated B deviates from curl A by {defect:.2e}"
        )
    return fields


def uniform_fields(b=0.0, phi_const=0.0, phi_cos=()):
    """Uniform magnetic field in the gauge A = (-b*r2, 0), plus a potential.

    ``phi_cos`` is an iterable of (amplitude, f1, f2) adding terms
    amplitude*cos(f1*r1 + f2*r2) to the potential.
    """
    terms = tuple((float(amp), float(f1), float(f2)) for amp, f1, f2 in phi_cos)

    def phi(r):
        r = np.asarray(r, dtype=float)
        out = np.full(r.shape[:-1], float(phi_const))
        for amp, f1, f2 in terms:
            out = out + amp * np.cos(f1 * r[..., 0] + f2 * r[..., 1])
        return out

    def grad_phi(r):
        r = np.asarray(r, dtype=float)
        g = np.zeros(r.shape)
        for amp, f1, f2 in terms:
            s = -amp * np.sin(f1 * r[..., 0] + f2 * r[..., 1])
            g[..., 0] += f1 * s
            g[..., 1] += f2 * s
        return g

    def a(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        out[..., 0] = -b * r[..., 1]
        return out

    def bfield(r):
        return np.full(np.shape(r)[:-1], float(b))

    return SlowFields(phi=phi, a=a, b=bfield, grad_phi=grad_phi)


def _shifted(frame, di, dj):
    """Canonical-frame values at kappa + (di/N1, dj/N2), |di|, |dj| small.

    Cross-seam slices use the exact wrap relations of the canonical frame:
    phi(kappa1 + 1) = exp(2i*pi*theta*kappa2) V1 phi and
    phi(kappa2 + 1) = exp(2i*pi*k2_twist*kappa1) V2 phi.
    """
    if not frame.canonical or frame.theta is None:
        raise NumericValidityError("connection stencils require a canonical frame")
    v1 = frame.proj.family.v1
    v2 = frame.proj.family.v2
    up1 = np.exp(2j * np.pi * frame.theta * frame.kappa2())
    up2 = np.exp(2j * np.pi * frame.k2_twist * frame.kappa1())
    u = frame.values[..., 0]
    out = np.roll(u, (-di, -dj), axis=(0, 1))
    n1, n2 = frame.n1, frame.n2
    if di > 0:
        rows = slice(n1 - di, n1)
        out[rows] = np.einsum("ab,ijb->ija", v1, out[rows]) * up1[None, :, None]
    elif di < 0:
        rows = slice(0, -di)
        out[rows] = (
            np.einsum("ab,ijb->ija", np.linalg.inv(v1), out[rows]) / up1[None, :, None]
        )
    if dj > 0:
        cols = slice(n2 - dj, n2)
        out[:, cols] = np.einsum("ab,ijb->ija", v2, out[:, cols]) * up2[:, None, None]
    elif dj < 0:
        cols = slice(0, -dj)
        out[:, cols] = (
            np.einsum("ab,ijb->ija", np.linalg.inv(v2), out[:, cols]) / up2[:, None, None]
        )
    return out


def _overlap_phases(frame, axis, steps=(-2, -1, 1, 2)):
    """Overlaps <phi(kappa), phi(kappa + s*h)> and aligned neighbor values.

    Rotating each neighbor by the overlap phase puts the stencil into the
    discrete parallel gauge, which makes the differences insensitive to how
    fast the frame's phase winds (only the gauge-covariant content is
    differentiated).
    """
    u = frame.values[..., 0]
    shifted = {}
    phases = {}
    for s in steps:
        v = _shifted(frame, s if axis == 0 else 0, s if axis == 1 else 0)
        ov = np.einsum("ija,ija->ij", u.conj(), v)
        mod = np.abs(ov)
        if float(mod.min()) < 1e-8:
            raise NumericValidityError(
                "vanishing frame overlap; grid too coarse for stencils"
            )
        phases[s] = np.angle(ov)
        shifted[s] = v * (mod / ov)[..., None]
    return phases, shifted


def frame_tangent_rate(frame, axis, order=4):
    """Im <phi, d_kappa phi> from symmetric combinations of link phases.

    The link phase arg<phi(kappa), phi(kappa + s*h)> is additive in the
    frame's phase, so the estimate stays accurate no matter how fast the
    canonical twist winds; the residual error is fourth order in the grid
    spacing with gauge-covariant coefficients.
    """
    n = frame.n1 if axis == 0 else frame.n2
    h = 1.0 / n
    phases, _ = _overlap_phases(frame, axis)
    if order == 2:
        return (phases[1] - phases[-1]) / (2 * h)
    if order == 4:
        return (-phases[2] + 8 * phases[1] - 8 * phases[-1] + phases[-2]) / (12 * h)
    raise ValueError("stencil order must be 2 or 4")


def frame_orthogonal_derivative(frame, axis, order=4):
    """Projected derivative (1 - |phi><phi|) d_kappa phi via aligned stencils.

    Central stencils act on neighbors rotated into the discrete parallel
    gauge; the derivative of the aligned field at the center is exactly the
    orthogonal component of d phi.
    """
    n = frame.n1 if axis == 0 else frame.n2
    h = 1.0 / n
    _, sh = _overlap_phases(frame, axis)
    if order == 2:
        return (sh[1] - sh[-1]) / (2 * h)
    if order == 4:
        return (-sh[2] + 8 * sh[1] - 8 * sh[-1] + sh[-2]) / (12 * h)
    raise ValueError("stencil order must be 2 or 4")


def frame_derivative(frame, axis, order=4):
    """d phi / d kappa_axis of a canonical frame on its grid.

    Assembled as the orthogonal part plus i * (tangent rate) * phi; both
    pieces come from on-grid central stencils in the parallel gauge.
    """
    u = frame.values[..., 0]
    rate = frame_tangent_rate(frame, axis, order)
    orth = frame_orthogonal_derivative(frame, axis, order)
    return orth + 1j * rate[..., None] * u


def connection_coefficients(frame, order=4):
    """Berry connection coefficients A_j(k) = -(i/2pi) <phi, d_kappa_j phi>.

    Requires a rank-1 canonical frame.  Raises when the normalization
    drift |Re <phi, d phi>| exceeds 1e-6.  Returns (A1, A2) real arrays on
    the frame grid.
    """
    u = frame.values[..., 0]
    out = []
    for axis in (0, 1):
        rate = frame_tangent_rate(frame, axis, order)
        orth = frame_orthogonal_derivative(frame, axis, order)
        # <phi, orth> measures normalization drift; it vanishes for an
        # exactly orthonormal smooth frame
        drift = np.einsum("ija,ija->ij", u.conj(), orth)
        if float(np.max(np.abs(drift.real))) > 1e-6:
            raise NumericValidityError(
                "normalization drift in <phi, d phi>; frame not orthonormal enough"
            )
        out.append(rate / (2.0 * np.pi))
    return out[0], out[1]


def band_energies(frame):
    """E(k) of the frame's band on the frame grid."""
    proj = frame.proj
    if proj.rank != 1:
        raise ValueError("band energies on a frame require rank 1")
    kap = np.stack(np.meshgrid(frame.kappa1(), frame.kappa2(), indexing="ij"), axis=-1)
    w = eigvalsh_many(proj.family(kap * np.asarray(proj.family.periods)))
    return w[..., proj.bands[0] - 1]


def rammal_wilkinson(frame, family, energies, order=4):
    """Rammal-Wilkinson samples M(k) = -Im <d1 phi, (H - E) d2 phi>.

    Derivatives are cartesian (d_{k_j} = d_{kappa_j} / L_j).  Since
    (H - E) phi = 0, only the orthogonal components of the derivatives
    contribute; the tangential parts drop out exactly.
    """
    l1, l2 = family.periods
    d1 = frame_orthogonal_derivative(frame, 0, order) / l1
    d2 = frame_orthogonal_derivative(frame, 1, order) / l2
    kap = np.stack(np.meshgrid(frame.kappa1(), frame.kappa2(), indexing="ij"), axis=-1)
    h = family(kap * np.asarray(family.periods))
    hd2 = np.einsum("ijab,ijb->ija", h, d2) - energies[..., None] * d2
    return -np.einsum("ija,ija->ij", d1.conj(), hd2).imag


@dataclass(frozen=True)
class EffectiveSymbol:
    """Sampled band data and evaluators entering the Peierls symbol.

    ``a1_periodic`` holds the periodic part of A_1 (the affine part
    ``a1_slope * kappa2`` is kept exactly); ``a2_combination`` is the fully
    periodic combination A_2(k) - theta*kappa1.  ``eps`` only weights
    h0 + eps*h1 when a total symbol is requested.
    """

    theta: int
    periods: tuple
    energy: PeriodicSpline2D
    a1_slope: int
    a1_periodic: PeriodicSpline1D
    a2_combination: PeriodicSpline2D
    rw: PeriodicSpline2D
    energy_samples: np.ndarray
    a1_samples: np.ndarray
    a2_samples: np.ndarray
    rw_samples: np.ndarray

    def a1(self, k2):
        """A_1 as a function of k2 alone (it is independent of k1)."""
        kappa2 = np.asarray(k2, dtype=float) / self.periods[1]
        return self.a1_slope * kappa2 + self.a1_periodic(np.asarray(k2, dtype=float))


def effective_symbol(proj, n1=256, n2=768, order=4, frame=None):
    """Build the EffectiveSymbol of one isolated band.

    Constructs the canonical frame (or reuses a supplied one), samples E,
    A_1, A_2 and the Rammal-Wilkinson term on the frame grid and wraps
    them in periodic splines.
    """
    if proj.rank != 1:
        raise ValueError("effective symbols are built for single bands")
    if frame is None:
        frame = build_frame(proj, n1, n2, canonical=True)
    elif not frame.canonical:
        raise ValueError("a supplied frame must be in the canonical gauge")
    theta = frame.theta
    family = proj.family
    l1, l2 = family.periods
    energies = band_energies(frame)
    a1, a2 = connection_coefficients(frame, order)
    rw = rammal_wilkinson(frame, family, energies, order)

    kappa1 = frame.kappa1()
    kappa2 = frame.kappa2()
    # A_1 is kappa1-independent; keep its exact affine slope (theta + winding
    # of the pre-canonical transition = k2_twist) and spline the rest
    a1_profile = a1.mean(axis=0)
    a1_per = a1_profile - frame.k2_twist * kappa2
    comb = a2 - theta * kappa1[:, None]

    return EffectiveSymbol(
        theta=theta,
        periods=(l1, l2),
        energy=PeriodicSpline2D(energies, (l1, l2)),
        a1_slope=frame.k2_twist,
        a1_periodic=PeriodicSpline1D(a1_per, l2),
        a2_combination=PeriodicSpline2D(comb, (l1, l2)),
        rw=PeriodicSpline2D(rw, (l1, l2)),
        energy_samples=energies,
        a1_samples=a1,
        a2_samples=a2,
        rw_samples=rw,
    )


def principal_symbol(energy, fields):
    """h0(k, r) = E(k - A(r)) + Phi(r) as a vectorized evaluator.

    ``energy`` is a periodic spline (or an EffectiveSymbol, whose energy
    spline is used).
    """
    spline = energy.energy if isinstance(energy, EffectiveSymbol) else energy

    def h0(k, r):
        k = np.asarray(k, dtype=float)
        r = np.asarray(r, dtype=float)
        kt = k - fields.a(r)
        return spline(kt[..., 0], kt[..., 1]) + fields.phi(r)

    return h0


def subprincipal_symbol(sym, fields):
    """h1(k, r) evaluator of the first-order Peierls correction.

    Requires the gauge A . e2 = 0; fields violating it are rejected.
    """
    defect = fields.a2_defect()
    if defect > GAUGE_TOL:
        raise NumericValidityError(
            f"h1 requires the gauge A_2 = 0; max |A_2| = {defect:.2e}"
        )
    l1, l2 = sym.periods
    gamma1 = 2.0 * np.pi / l1
    gamma2 = 2.0 * np.pi / l2

    def h1(k, r):
        k = np.asarray(k, dtype=float)
        r = np.asarray(r, dtype=float)
        a = fields.a(r)
        kt = k - a
        kt1, kt2 = kt[..., 0], kt[..., 1]
        de1 = sym.energy.dx1(kt1, kt2)
        de2 = sym.energy.dx2(kt1, kt2)
        b = fields.b(r)
        gphi = fields.grad_phi(r)
        force1 = b * (-de2) - gphi[..., 0]
        force2 = b * de1 - gphi[..., 1]
        a1_val = sym.a1(kt2)
        # A_2(kt) - theta*kappa1 = combination(kt) - theta * A_1(r)/L1
        a2_val = sym.a2_combination(kt1, kt2) - sym.theta * a[..., 0] / l1
        berry1 = a1_val * gamma1
        berry2 = a2_val * gamma2
        return berry1 * force1 + berry2 * force2 + b * sym.rw(kt1, kt2)

    return h1


def total_symbol(sym, fields, eps):
    """h0 + eps * h1 as one evaluator."""
    h0 = principal_symbol(sym, fields)
    h1 = subprincipal_symbol(sym, fields)

    def h(k, r):
        return h0(k, r) + eps * h1(k, r)

    return h
