"""Dense complex Hermitian eigenproblems and Brillouin-zone grids.

All matrices in this package are tiny (dimension <= a few dozen), so the
eigensolver is LAPACK via ``numpy.linalg.eigh`` wrapped with a deterministic
post-pass: a fixed phase convention for every eigenvector and a fixed
ordering inside degenerate clusters.  Repeated calls on the same input are
bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonHermitianError

HERMITICITY_TOL = 1e-12
_DEGENERACY_TOL = 1e-12


def hermiticity_defect(h):
    """Largest absolute deviation of ``h`` from its conjugate transpose."""
    h = np.asarray(h)
    return float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0


def validate_hermitian(h, tol=HERMITICITY_TOL):
    """Return ``h`` as a complex array, rejecting non-Hermitian input."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise NonHermitianError(f"expected a square matrix, got shape {h.shape}")
    defect = hermiticity_defect(h)
    if defect > tol:
        raise NonHermitianError(
            f"matrix is not Hermitian: max |H - H^*| = {defect:.3e} > {tol:.0e}"
        )
    return h


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues ascending and the matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray  # (n,) real, nondecreasing
    eigenvectors: np.ndarray  # (n, n), column j pairs with eigenvalues[j]

    @property
    def dim(self):
        return self.eigenvalues.shape[0]


def _fix_phases(w, v):
    """Apply the deterministic phase and degenerate-ordering convention.

    Each eigenvector is rotated so that its largest-modulus component is real
    and positive (ties broken by the lowest row index).  Within a degenerate
    eigenvalue cluster the columns are then sorted lexicographically by
    (real, imag) parts.
    """
    n = w.shape[0]
    # first occurrence of the largest modulus per column
    rows = np.argmax(np.abs(v), axis=0)
    lead = v[rows, np.arange(n)]
    phase = lead / np.abs(lead)
    v = v / phase[np.newaxis, :]

    # canonical order inside degenerate clusters
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and w[stop] - w[start] <= _DEGENERACY_TOL * (1.0 + abs(w[start])):
            stop += 1
        if stop - start > 1:
            cols = sorted(
                range(start, stop),
                key=lambda j: tuple(
                    np.round(np.concatenate([v[:, j].real, v[:, j].imag]), 12)
                ),
            )
            w[start:stop] = w[cols]
            v[:, start:stop] = v[:, cols]
        start = stop
    return w, v


def eigh(h, tol=HERMITICITY_TOL):
    """Eigendecomposition of a Hermitian matrix with deterministic output.

    Raises :class:`NonHermitianError` when the hermiticity defect exceeds
    ``tol``.  The returned eigenvalues are nondecreasing and the eigenvector
    Gram matrix is the identity to machine precision.
    """
    h = validate_hermitian(h, tol)
    w, v = np.linalg.eigh(h)
    w, v = _fix_phases(w.copy(), v.copy())
    return EigenDecomposition(eigenvalues=w, eigenvectors=v)


def eigh_many(hs):
    """Batched eigendecomposition, same conventions as :func:`eigh`.

    ``hs`` has shape (..., n, n); no hermiticity validation is performed here
    (the batch builders construct Hermitian matrices by symmetry).  Phase
    fixing is vectorized; the degenerate-cluster reordering is skipped since
    batched consumers (band structures, link variables) are insensitive to
    the ordering convention inside exact degeneracies.
    """
    hs = np.asarray(hs, dtype=complex)
    w, v = np.linalg.eigh(hs)
    rows = np.argmax(np.abs(v), axis=-2)
    lead = np.take_along_axis(v, rows[..., np.newaxis, :], axis=-2)[..., 0, :]
    phase = lead / np.abs(lead)
    return w, v / phase[..., np.newaxis, :]


def eigvalsh_many(hs):
    """Batched eigenvalues only, ascending."""
    return np.linalg.eigvalsh(np.asarray(hs, dtype=complex))


@dataclass(frozen=True)
class KGrid:
    """Uniform half-open grid on [0, L1) x [0, L2).

    Point (i, j) sits at ``(i * L1 / N1, j * L2 / N2)``.
    """

    L1: float
    L2: float
    N1: int
    N2: int

    def __post_init__(self):
        if self.L1 <= 0 or self.L2 <= 0:
            raise ValueError("grid periods must be positive")
        if self.N1 < 1 or self.N2 < 1:
            raise ValueError("grid counts must be positive integers")

    @property
    def spacing(self):
        return (self.L1 / self.N1, self.L2 / self.N2)

    def axis1(self):
        return np.arange(self.N1) * (self.L1 / self.N1)

    def axis2(self):
        return np.arange(self.N2) * (self.L2 / self.N2)

    def points(self):
        """Array of shape (N1, N2, 2) with the grid coordinates."""
        k1, k2 = np.meshgrid(self.axis1(), self.axis2(), indexing="ij")
        return np.stack([k1, k2], axis=-1)


def make_grid(L1, L2, N1, N2):
    """Construct a :class:`KGrid`; arguments must all be positive."""
    return KGrid(float(L1), float(L2), int(N1), int(N2))
