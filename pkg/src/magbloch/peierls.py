"""Peierls substitution families H^B_{theta,q} and their subband topology.

For a magnetic subband with Chern number theta split off a flux-2*pi*p/q
Hofstadter spectrum, the theta-quantized Peierls Hamiltonian of the model
dispersion E_q(k) = 2 cos(q k1) + 2 cos(q k2) in a further perturbing field
B = 2*pi*ptilde/(q^2*qtilde) reduces to a qtilde x qtilde matrix family on
the zone [0, 2*pi/(q*qtilde)) x [0, 2*pi):

    diagonal            2*cos(q*(k1 + (j-1)*q*B)),  j = 1..qtilde
    super/subdiagonal   exp(+/- i*k2*(q - theta*ptilde/qtilde))
    corners             exp(-/+ i*k2*(q - theta*ptilde/qtilde))

built here literally as U1 + U1* + U2 + U2* from the two unitary
generators, which satisfy the noncommutative-torus relation
U1 U2 = exp(i*sigma*q^2*B) U2 U1 with sigma = -1 in this shift convention.

The family is isospectral to the Hofstadter model at flux ptilde/qtilde;
its subband Chern numbers come from the twisted link-variable scheme (the
boundary gluing unitaries plus the constant-curvature phase of the
theta-connection) and match the Hofstadter sub-subbands at the composed
flux B0 + Btilde.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd

import numpy as np

from .errors import NumericValidityError
from .hofstadter import (
    BlochMatrixFamily,
    RationalFlux,
    band_intervals,
    band_structure,
    hausdorff_distance,
    hofstadter_family,
    rational_flux,
    spectrum_intervals,
)
from .linalg import make_grid
from .topology import (
    FHS_GRID_DENSITY,
    cluster_chern_numbers,
    gap_labels_diophantine,
    band_chern_from_gaps,
)

COMMUTATION_SIGN = -1  # frozen: U1 U2 = exp(i*sigma*q^2*B) U2 U1
ISOSPEC_GRID_DENSITY = 96


def model_dispersion(q):
    """The model band dispersion E_q(k) = 2 cos(q k1) + 2 cos(q k2)."""

    def energy(k):
        k = np.asarray(k, dtype=float)
        return 2.0 * (np.cos(q * k[..., 0]) + np.cos(q * k[..., 1]))

    return energy


@dataclass(frozen=True)
class PeierlsParams:
    """(theta, q, ptilde/qtilde) with derived field B = 2*pi*ptilde/(q^2*qtilde)."""

    theta: int
    q: int
    ptilde: int
    qtilde: int

    def __post_init__(self):
        if self.q < 1 or self.qtilde < 1:
            raise ValueError("q and qtilde must be positive")
        if gcd(abs(self.ptilde), self.qtilde) != 1:
            raise ValueError(f"{self.ptilde}/{self.qtilde} is not reduced")

    @property
    def b_value(self):
        """Perturbing field B in radians: 2*pi*ptilde/(q^2*qtilde)."""
        return 2.0 * np.pi * self.ptilde / (self.q**2 * self.qtilde)

    @property
    def b_fraction(self):
        """B / (2*pi) as an exact fraction."""
        return Fraction(self.ptilde, self.q**2 * self.qtilde)

    @property
    def hof_flux(self):
        """Flux q^2 B / (2*pi) of the isospectral Hofstadter model."""
        return rational_flux(self.ptilde, self.qtilde)

    @property
    def coupling(self):
        """Off-diagonal phase rate q - theta*ptilde/qtilde."""
        return self.q - self.theta * self.ptilde / self.qtilde


def peierls_generators(params, k):
    """The unitary pair (U1, U2) whose sum-with-adjoints is the family.

    U1 is diagonal in the reduced-zone index, U2 a phase times the cyclic
    shift; they satisfy U1 U2 = exp(i*sigma*q^2*B) U2 U1 with the frozen
    sign sigma = -1.
    """
    k = np.asarray(k, dtype=float)
    qt = params.qtilde
    q = params.q
    b = params.b_value
    j = np.arange(qt)
    d = np.exp(1j * q * (k[..., 0, np.newaxis] + j * q * b))
    u1 = np.zeros(k.shape[:-1] + (qt, qt), dtype=complex)
    u1[..., j, j] = d
    shift = np.zeros((qt, qt), dtype=complex)
    shift[j, (j + 1) % qt] = 1.0
    phase = np.exp(1j * k[..., 1] * params.coupling)
    u2 = phase[..., np.newaxis, np.newaxis] * shift
    return u1, u2


def peierls_matrix(params, k):
    """H^B_{theta,q}(k) = U1 + U1* + U2 + U2*, built from the generators."""
    u1, u2 = peierls_generators(params, k)
    return u1 + u1.conj().swapaxes(-1, -2) + u2 + u2.conj().swapaxes(-1, -2)


def _gluing_unitaries(params):
    """Constant boundary unitaries of the reduced-zone family.

    V1 is the cyclic shift by ptilde^{-1} (mod qtilde), which permutes the
    diagonal one step of the k1-period; V2 = diag(exp(2i*pi*theta*ptilde*j
    / qtilde)) compensates the k2-period phase of the off-diagonal
    entries.  Both follow from the quasi-periodicity of the underlying
    theta-sections combined with the reduction phases.
    """
    qt = params.qtilde
    j = np.arange(qt)
    if qt == 1:
        return np.eye(1, dtype=complex), np.eye(1, dtype=complex)
    r = pow(params.ptilde % qt, -1, qt)
    shift = np.zeros((qt, qt), dtype=complex)
    shift[j, (j + 1) % qt] = 1.0
    v1 = np.linalg.matrix_power(shift, r)
    v2 = np.diag(np.exp(2j * np.pi * params.theta * params.ptilde * j / qt))
    return v1, v2


def peierls_family(params):
    """The q~ x q~ Bloch matrix family with its boundary gluing."""
    l1 = 2.0 * np.pi / (params.q * params.qtilde)
    v1, v2 = _gluing_unitaries(params)

    def evaluate(k):
        return peierls_matrix(params, k)

    return BlochMatrixFamily(
        dim=params.qtilde,
        periods=(l1, 2.0 * np.pi),
        evaluator=evaluate,
        gluing=(v1, v2),
        label=f"peierls theta={params.theta} q={params.q} B/2pi={params.b_fraction}",
    )


def peierls_intervals(params, grid_density=ISOSPEC_GRID_DENSITY, refine=True):
    """Refined spectral intervals of H^B_{theta,q} over its reduced zone."""
    family = peierls_family(params)
    grid = make_grid(family.periods[0], family.periods[1], grid_density, grid_density)
    return band_intervals(band_structure(family, grid), refine=refine)


@dataclass(frozen=True)
class IsospectralityReport:
    """Endpoint comparison of H^B_{theta,q} against the Hofstadter model."""

    params: PeierlsParams
    peierls_intervals: object
    hofstadter_intervals: object
    deviation: float  # Hausdorff distance between endpoint sets


def isospectrality_report(params, grid_density=ISOSPEC_GRID_DENSITY):
    """Spectral intervals of both realizations and their endpoint distance.

    H^B_{theta,q} represents the same noncommutative-torus element as the
    Hofstadter Hamiltonian at flux q^2 B = 2*pi*ptilde/qtilde, so the
    refined interval endpoints must coincide.
    """
    pe = peierls_intervals(params, grid_density)
    hof = spectrum_intervals(params.hof_flux, grid_density)
    return IsospectralityReport(
        params=params,
        peierls_intervals=pe,
        hofstadter_intervals=hof,
        deviation=hausdorff_distance(pe, hof),
    )


def tilde_b(theta, q, b):
    """The matching field Btilde = B / (1 - q*theta*B/(2*pi)).

    Equal to B*(1 - 1/(1 - 2*pi/(q*theta*B))); accepts B as a float
    (radians) or a Fraction of 2*pi, returning the same type.  The composed
    flux B0 + Btilde locates the Hofstadter sub-subbands whose Chern
    numbers match the subbands of H^B_{theta,q}.
    """
    if isinstance(b, Fraction):
        denom = 1 - q * theta * b
        if denom == 0:
            raise NumericValidityError("singular matching field: q*theta*B = 2*pi")
        return b / denom
    denom = 1.0 - q * theta * b / (2.0 * np.pi)
    if abs(denom) < 1e-14:
        raise NumericValidityError("singular matching field: q*theta*B = 2*pi")
    return b / denom


def theta_chern_numbers(params, grid_density=FHS_GRID_DENSITY):
    """Chern numbers of the subbands of H^B_{theta,q}.

    Link variables over the reduced zone with the family's boundary gluing
    plus the theta-connection link phases (constant plaquette curvature
    q*theta*dk1*dk2/(2*pi) in the interior).  The k1-boundary links carry
    the extra scalar exp(-i*theta*k2/qtilde) required by the cocycle
    condition of the twisted sections; that natural orientation is
    conjugate to the gap-color convention used everywhere else, so the
    plaquette totals are negated before rounding-consistent reporting.

    Touching subbands (even qtilde) are reported as joint clusters.
    Returns (clusters, integers); the integers sum to theta.
    """
    family = peierls_family(params)
    grid = make_grid(family.periods[0], family.periods[1], grid_density, grid_density)
    rate = -params.q * params.theta / (2.0 * np.pi)
    glue = -params.theta / params.qtilde
    clusters, values = cluster_chern_numbers(
        family, grid, link_rate=rate, glue_rate=glue
    )
    values = [-v for v in values]
    if sum(values) != params.theta:
        raise NumericValidityError(
            f"subband Chern numbers {values} do not sum to theta={params.theta}"
        )
    return clusters, values


def _window_clusters(intervals, window, tol=1e-8):
    """Indices of intervals inside the window; flags straddlers."""
    lo, hi = window
    inside = []
    for idx in range(intervals.count):
        a, b = intervals.intervals[idx]
        if a >= lo - tol and b <= hi + tol:
            inside.append(idx)
        elif b > lo + tol and a < hi - tol:
            return None  # straddles the window edge
    return inside


def find_parent_band(theta, q):
    """Hofstadter flux p/q and 1-based band index with Chern number theta.

    The Peierls family models a subband with Chern theta of some flux-p/q
    spectrum; the smallest p (then lowest band) realizing theta is used
    when the caller does not specify the parent.
    """
    for p in range(1, q):
        if gcd(p, q) != 1:
            continue
        flux = RationalFlux(p, q)
        cherns = band_chern_from_gaps(gap_labels_diophantine(flux))
        for n, c in enumerate(cherns, start=1):
            if c == theta:
                return flux, n
    raise NumericValidityError(
        f"no Hofstadter band at denominator {q} has Chern number {theta}"
    )


@dataclass(frozen=True)
class SubbandMatch:
    """Outcome of the subband-vs-sub-subband Chern comparison."""

    params: PeierlsParams
    parent_flux: RationalFlux
    parent_band: int
    composed_flux: RationalFlux
    peierls_cherns: tuple
    hofstadter_cherns: tuple
    match: bool
    inconclusive: bool = False
    reason: str = ""


def subband_chern_experiment(theta, q, ptilde, qtilde, parent=None,
                             grid_density=FHS_GRID_DENSITY):
    """Compare subband Chern numbers of H^B_{theta,q} with the Hofstadter
    sub-subbands at the composed flux B0 + Btilde.

    The parent band (flux p/q, band index) defaults to the first Hofstadter
    band with Chern number theta.  Sub-subbands are identified by interval
    containment in the parent band's energy window; a sub-subband
    straddling the window edge marks the comparison inconclusive.
    """
    params = PeierlsParams(theta=theta, q=q, ptilde=ptilde, qtilde=qtilde)
    if parent is None:
        parent_flux, parent_band = find_parent_band(theta, q)
    else:
        parent_flux, parent_band = parent

    bt = tilde_b(theta, q, params.b_fraction)
    composed = Fraction(parent_flux.p, parent_flux.q) + bt
    composed_flux = rational_flux(composed.numerator, composed.denominator)

    clusters_pe, cherns_pe = theta_chern_numbers(params, grid_density)

    parent_intervals = spectrum_intervals(parent_flux)
    # window = the parent band's interval (bands_per_interval locates it)
    below = 0
    window = None
    for idx, count in enumerate(parent_intervals.bands_per_interval):
        if below < parent_band <= below + count:
            window = tuple(parent_intervals.intervals[idx])
        below += count
    if window is None:
        raise NumericValidityError("parent band index outside the spectrum")

    sub_intervals = spectrum_intervals(composed_flux)
    inside = _window_clusters(sub_intervals, window)
    if inside is None:
        return SubbandMatch(
            params, parent_flux, parent_band, composed_flux,
            tuple(cherns_pe), (), match=False, inconclusive=True,
            reason="a sub-subband straddles the parent window edge",
        )

    hof_family = hofstadter_family(composed_flux)
    grid = make_grid(
        hof_family.periods[0], hof_family.periods[1], grid_density, grid_density
    )
    clusters_hof, cherns_hof = cluster_chern_numbers(hof_family, grid)
    # map band clusters to merged intervals: cluster i covers bands
    # [lo, hi) which lie inside interval j when counts line up
    counts = sub_intervals.bands_per_interval
    edges = np.concatenate([[0], np.cumsum(counts)])
    picked = []
    for idx in inside:
        lo, hi = edges[idx], edges[idx + 1]
        for (clo, chi), c in zip(clusters_hof, cherns_hof):
            if clo >= lo and chi <= hi:
                picked.append(c)
    match = tuple(picked) == tuple(cherns_pe)
    return SubbandMatch(
        params, parent_flux, parent_band, composed_flux,
        tuple(cherns_pe), tuple(picked), match=match,
    )
