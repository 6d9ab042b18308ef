"""The Hofstadter model at rational flux: Bloch matrices, bands, butterflies.

At flux ``2*pi*p/q`` per plaquette the magnetic Bloch-Floquet transform turns
the discrete magnetic Laplacian on Z^2 into a family of q x q Hermitian
matrices over the reduced zone [0, 2*pi/q) x [0, 2*pi):

    diagonal          2*cos(k2 - j*B0),  j = 0..q-1
    super/subdiagonal 1
    corners           exp(+/- i*q*k1)

For q = 2 the corner slots coincide with the off-diagonal ones and for q = 1
everything lands on the single entry; coinciding contributions are summed,
which is the unique assembly consistent with H = D1 + D1* + D2 + D2*.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from math import gcd

import numpy as np

from .linalg import KGrid, eigh_many, eigvalsh_many, make_grid

REFINE_STEP_TOL = 1e-10
REFINED_MERGE_TOL = 1e-6
SWEEP_GRID_DENSITY = 201
QUERY_GRID_DENSITY = 64


@dataclass(frozen=True, order=True)
class RationalFlux:
    """Reduced fraction p/q encoding flux 2*pi*p/q per unit cell.

    ``p/q`` lies in [0, 1]; the endpoint 1/1 is kept distinct from 0/1 so
    that butterfly sweeps can carry both edges of the flux axis.
    """

    p: int
    q: int

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("denominator must be positive")
        if not 0 <= self.p <= self.q:
            raise ValueError("flux must lie in [0, 1] after normalization")
        if gcd(abs(self.p), self.q) != 1:
            raise ValueError(f"{self.p}/{self.q} is not reduced")

    @property
    def value(self):
        """Flux angle B0 = 2*pi*p/q in radians per unit cell."""
        return 2.0 * np.pi * self.p / self.q

    @property
    def fraction(self):
        return Fraction(self.p, self.q)

    def __str__(self):
        return f"{self.p}/{self.q}"


def rational_flux(p, q):
    """Reduce p/q and normalize it modulo 1 into [0, 1)."""
    if q == 0:
        raise ValueError("flux denominator must be nonzero")
    f = Fraction(p, q) % 1
    return RationalFlux(f.numerator, f.denominator)


@dataclass(frozen=True)
class BlochMatrixFamily:
    """k |-> Hermitian matrix with declared periods and boundary gluing.

    ``evaluator`` accepts a point of shape (2,) or a stack (..., 2) and
    returns matrices of shape (..., dim, dim).  The family satisfies
    ``H(k + L_mu e_mu) = V_mu H(k) V_mu^*`` where (V1, V2) default to the
    identity pair (strict periodicity).
    """

    dim: int
    periods: tuple
    evaluator: object
    gluing: tuple | None = None
    label: str = ""

    def __call__(self, k):
        return self.evaluator(np.asarray(k, dtype=float))

    @property
    def v1(self):
        return np.eye(self.dim, dtype=complex) if self.gluing is None else self.gluing[0]

    @property
    def v2(self):
        return np.eye(self.dim, dtype=complex) if self.gluing is None else self.gluing[1]

    def equivariance_defect(self, samples=64, seed=7):
        """Max over random k of ||H(k + L_mu e_mu) - V_mu H(k) V_mu^*||."""
        rng = np.random.default_rng(seed)
        ks = rng.uniform(-2 * np.pi, 2 * np.pi, size=(samples, 2))
        h = self(ks)
        worst = 0.0
        for mu, v in ((0, self.v1), (1, self.v2)):
            shift = np.zeros(2)
            shift[mu] = self.periods[mu]
            hs = self(ks + shift)
            glued = np.einsum("ab,kbc,dc->kad", v, h, v.conj())
            worst = max(worst, float(np.max(np.abs(hs - glued))))
        return worst


def hofstadter_matrix(flux, k):
    """Evaluate the q x q Hofstadter Bloch matrix at one point k."""
    return hofstadter_family(flux)(np.asarray(k, dtype=float))


def hofstadter_family(flux):
    """The Hofstadter Bloch matrix family at the given rational flux."""
    q = flux.q
    b0 = flux.value

    def evaluate(k):
        k = np.asarray(k, dtype=float)
        lead = k.shape[:-1]
        ks = k.reshape(-1, 2)
        n = ks.shape[0]
        # (q, q, N) layout: every matrix entry is a contiguous vector over
        # the evaluation points, which keeps the assembly memory-friendly
        m = np.zeros((q, q, n), dtype=complex)
        corner = np.exp(1j * q * ks[:, 0])
        for j in range(q):
            m[j, j] = 2.0 * np.cos(ks[:, 1] - j * b0)
            if j + 1 < q:
                m[j, j + 1] = 1.0
                m[j + 1, j] = 1.0
        if q == 1:
            m[0, 0] += corner + corner.conj()
        else:
            m[0, q - 1] += corner
            m[q - 1, 0] += corner.conj()
        return np.moveaxis(m, -1, 0).reshape(lead + (q, q))

    return BlochMatrixFamily(
        dim=q,
        periods=(2.0 * np.pi / q, 2.0 * np.pi),
        evaluator=evaluate,
        label=f"hofstadter {flux}",
    )


@dataclass(frozen=True)
class BandStructure:
    """Eigenvalue sheets E_n(k), sorted ascending per grid point."""

    family: BlochMatrixFamily
    grid: KGrid
    energies: np.ndarray  # (N1, N2, dim)
    vectors: np.ndarray | None = None  # (N1, N2, dim, dim), columns per band

    @property
    def num_bands(self):
        return self.energies.shape[-1]

    def band_gap(self, n, m):
        """Minimum over the grid of E_m - E_n (1-based band indices)."""
        return float(np.min(self.energies[..., m - 1] - self.energies[..., n - 1]))


def band_structure(family, grid, keep_vectors=False):
    """Diagonalize the family on every grid point.

    The sweep is chunked so that large grids at large q do not materialize
    hundreds of megabytes of stacked matrices at once.
    """
    if not np.allclose(grid.L1, family.periods[0]) or not np.allclose(
        grid.L2, family.periods[1]
    ):
        raise ValueError(
            f"grid periods {(grid.L1, grid.L2)} do not match family periods {family.periods}"
        )
    points = grid.points().reshape(-1, 2)
    total = points.shape[0]
    dim = family.dim
    chunk = max(1, 8_388_608 // (dim * dim))
    energies = np.empty((total, dim))
    vectors = np.empty((total, dim, dim), dtype=complex) if keep_vectors else None
    for start in range(0, total, chunk):
        hs = family(points[start : start + chunk])
        if keep_vectors:
            w, v = eigh_many(hs)
            vectors[start : start + chunk] = v
        else:
            w = eigvalsh_many(hs)
        energies[start : start + chunk] = w
    energies = energies.reshape(grid.N1, grid.N2, dim)
    if keep_vectors:
        vectors = vectors.reshape(grid.N1, grid.N2, dim, dim)
    return BandStructure(family, grid, energies, vectors)


@dataclass(frozen=True)
class IntervalSet:
    """Sorted disjoint closed intervals with the band count inside each."""

    intervals: np.ndarray  # (M, 2) with lo <= hi, ascending
    bands_per_interval: tuple  # M entries summing to the band count

    @property
    def count(self):
        return self.intervals.shape[0]

    def endpoints(self):
        return self.intervals.reshape(-1)

    def gaps(self):
        """Open gaps (hi_i, lo_{i+1}) between consecutive intervals."""
        return [
            (float(self.intervals[i, 1]), float(self.intervals[i + 1, 0]))
            for i in range(self.count - 1)
        ]

    def total_width(self):
        return float(np.sum(self.intervals[:, 1] - self.intervals[:, 0]))


def hausdorff_distance(a, b):
    """Hausdorff distance between the endpoint sets of two IntervalSets."""
    x = np.sort(a.endpoints())
    y = np.sort(b.endpoints())
    d = np.abs(x[:, np.newaxis] - y[np.newaxis, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def _compass_refine(f, k0, best, step, sign, step_tol=REFINE_STEP_TOL):
    """Maximize sign*f by compass search from k0; returns the refined value.

    Classic pattern search: try the four axis moves, walk while improving,
    halve the step otherwise, down to ``step_tol``.
    """
    k = np.array(k0, dtype=float)
    val = sign * best
    while step > step_tol:
        moved = False
        for d in ((step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)):
            while True:
                trial = k + d
                tval = sign * f(trial)
                if tval > val:
                    k, val = trial, tval
                    moved = True
                else:
                    break
        if not moved:
            step *= 0.5
    return sign * val


def band_intervals(bs, refine=True, merge_tol=None):
    """Per-band energy ranges, optionally refined, merged into an IntervalSet.

    With refinement the per-band extrema are polished by compass search from
    the best grid point (step halving down to 1e-10).  Intervals closer than
    ``merge_tol`` are merged; the default is 1e-6 when refining and three
    grid spacings otherwise, which absorbs the discretization error at
    band-touching points.
    """
    if merge_tol is None:
        merge_tol = REFINED_MERGE_TOL if refine else 3.0 * max(bs.grid.spacing)
    energies = bs.energies
    family = bs.family
    n1, n2, nb = energies.shape
    raw = []
    for n in range(nb):
        e = energies[..., n]
        imin = np.unravel_index(np.argmin(e), e.shape)
        imax = np.unravel_index(np.argmax(e), e.shape)
        lo, hi = float(e[imin]), float(e[imax])
        if refine:
            step = 0.5 * max(bs.grid.spacing)

            def band_energy(k, _n=n):
                return float(eigvalsh_many(family(k))[_n])

            kmin = (imin[0] * bs.grid.L1 / n1, imin[1] * bs.grid.L2 / n2)
            kmax = (imax[0] * bs.grid.L1 / n1, imax[1] * bs.grid.L2 / n2)
            lo = _compass_refine(band_energy, kmin, lo, step, sign=-1.0)
            hi = _compass_refine(band_energy, kmax, hi, step, sign=+1.0)
        raw.append((lo, hi))

    merged = [[raw[0][0], raw[0][1], 1]]
    for lo, hi in raw[1:]:
        if lo - merged[-1][1] <= merge_tol:
            merged[-1][1] = max(merged[-1][1], hi)
            merged[-1][2] += 1
        else:
            merged.append([lo, hi, 1])
    return IntervalSet(
        intervals=np.array([[m[0], m[1]] for m in merged], dtype=float),
        bands_per_interval=tuple(m[2] for m in merged),
    )


def spectrum_intervals(flux, grid_density=QUERY_GRID_DENSITY, refine=True, merge_tol=None):
    """Convenience: IntervalSet of the Hofstadter model at one flux."""
    family = hofstadter_family(flux)
    grid = make_grid(family.periods[0], family.periods[1], grid_density, grid_density)
    return band_intervals(band_structure(family, grid), refine=refine, merge_tol=merge_tol)


def farey(max_q):
    """All reduced fractions p/q in [0, 1] with q <= max_q, ascending."""
    if max_q < 1:
        raise ValueError("max_q must be >= 1")
    fracs = sorted(
        {Fraction(p, q) for q in range(1, max_q + 1) for p in range(0, q + 1)}
    )
    return [RationalFlux(f.numerator, f.denominator) for f in fracs]


@dataclass(frozen=True)
class ButterflyData:
    """Rows of (flux, spectral intervals, optional gap labels), flux ascending."""

    rows: tuple  # of (RationalFlux, IntervalSet, labels or None)

    def fluxes(self):
        return [r[0] for r in self.rows]


def _worker_count():
    cap = os.environ.get("BUTTERFLY_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def butterfly(max_q, grid_density=SWEEP_GRID_DENSITY, refine=True, merge_tol=None):
    """Spectral intervals for every Farey flux with q <= max_q.

    Rows are computed in parallel (capped by the BUTTERFLY_THREADS
    environment variable) and returned in flux order, so the result is
    independent of the schedule.
    """
    fluxes = farey(max_q)

    def row(flux):
        return (flux, spectrum_intervals(flux, grid_density, refine, merge_tol), None)

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, fluxes))
    else:
        rows = [row(f) for f in fluxes]
    return ButterflyData(rows=tuple(rows))
