"""Berry-connection parallel transport and global frames over the torus.

Everything here works in unit torus coordinates kappa = (k1/L1, k2/L2) of
the underlying Bloch family.  The construction follows the standard recipe
for trivializing the extended Bloch bundle of an isolated band family:

1. build a periodic orthonormal line frame h(kappa2) on the column
   kappa1 = 0 by parallel transport plus distribution of the closing-defect
   logarithm;
2. extend it to the whole torus by parallel transport along kappa1;
3. read off the transition unitary alpha(kappa2) relating the frame at
   kappa1 = 1 (glued back by the family's boundary unitary) to the frame at
   kappa1 = 0.  For rank-1 bands the winding of alpha is the Chern number
   and a kappa1-linear phase twist brings alpha to the canonical form
   exp(-2*pi*i*theta*kappa2).

Transport integrates dt/ds = [grad_P, P] t with classical fourth-order
steps, the projector gradient by central differences, and a polar
projection back to the unitary group after every step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    BandCrossingError,
    BranchAmbiguityError,
    GridRefinementNeeded,
    NumericValidityError,
    TransportAccuracyError,
)
from .linalg import eigh_many

GRAD_STEP = 1e-5
UNITARITY_DRIFT_MAX = 1e-6
DEFAULT_SUBSTEPS = 2


@dataclass(frozen=True)
class ProjectorFamily:
    """Spectral projector of a contiguous band set, in kappa coordinates.

    ``bands`` are 1-based band indices, e.g. ``(2,)`` for the middle band of
    the flux-1/3 Hofstadter model or ``(1, 2)`` for a rank-2 set.
    """

    family: object  # BlochMatrixFamily
    bands: tuple

    def __post_init__(self):
        bands = tuple(int(b) for b in self.bands)
        if not bands or any(b < 1 or b > self.family.dim for b in bands):
            raise ValueError(f"band indices {bands} outside 1..{self.family.dim}")
        if list(bands) != list(range(bands[0], bands[-1] + 1)):
            raise ValueError(f"band set {bands} is not contiguous")
        object.__setattr__(self, "bands", bands)

    @property
    def dim(self):
        return self.family.dim

    @property
    def rank(self):
        return len(self.bands)

    def _k(self, kappas):
        kappas = np.asarray(kappas, dtype=float)
        return kappas * np.asarray(self.family.periods)

    def _eigh(self, kappas):
        return eigh_many(self.family(self._k(kappas)))

    def basis_at(self, kappas):
        """Orthonormal eigenvector columns spanning the band set, (..., n, m)."""
        lo, hi = self.bands[0] - 1, self.bands[-1]
        _, v = self._eigh(kappas)
        return v[..., :, lo:hi]

    def projector_at(self, kappas):
        """Orthogonal projector P(kappa), shape (..., n, n)."""
        b = self.basis_at(kappas)
        return np.einsum("...am,...bm->...ab", b, b.conj())

    def gap_at(self, kappas):
        """Distance of the band set to the complementary spectrum, (...)."""
        lo, hi = self.bands[0] - 1, self.bands[-1]
        w, _ = self._eigh(kappas)
        gaps = np.full(w.shape[:-1], np.inf)
        if lo > 0:
            gaps = np.minimum(gaps, w[..., lo] - w[..., lo - 1])
        if hi < self.dim:
            gaps = np.minimum(gaps, w[..., hi] - w[..., hi - 1])
        return gaps

    def generator_at(self, kappas, delta, step=GRAD_STEP):
        """Transport generator [delta . grad P, P] at each kappa."""
        kappas = np.asarray(kappas, dtype=float)
        delta = np.asarray(delta, dtype=float)
        scale = float(np.linalg.norm(delta))
        if scale == 0.0:
            n = self.dim
            return np.zeros(kappas.shape[:-1] + (n, n), dtype=complex)
        unit = delta / scale
        p0 = self.projector_at(kappas)
        pp = self.projector_at(kappas + step * unit)
        pm = self.projector_at(kappas - step * unit)
        dp = (pp - pm) * (scale / (2.0 * step))
        return dp @ p0 - p0 @ dp


def _polar_unitary(t):
    """Closest unitary to ``t`` (batched polar projection via SVD)."""
    u, _, vh = np.linalg.svd(t)
    return u @ vh


def _rk4_transport(proj, kappas, delta, steps, collect_at=None):
    """Batched transport along kappa(s) = kappas + s*delta for s in [0, 1].

    ``kappas`` has shape (B, 2); a single shared ``delta`` moves every batch
    element.  Returns (T, drift) or, when ``collect_at`` is a sorted array of
    s values coinciding with step boundaries, a list of snapshots of T.
    """
    kappas = np.asarray(kappas, dtype=float)
    delta = np.asarray(delta, dtype=float)
    batch = kappas.shape[0]
    n = proj.dim
    t = np.broadcast_to(np.eye(n, dtype=complex), (batch, n, n)).copy()
    h = 1.0 / steps
    eye = np.eye(n, dtype=complex)
    drift = 0.0
    snapshots = []
    collect = list(np.atleast_1d(collect_at)) if collect_at is not None else None

    def gen(s):
        return proj.generator_at(kappas + s * delta, delta)

    a_right = gen(0.0)
    for i in range(steps):
        s0 = i * h
        if collect is not None and collect and abs(collect[0] - s0) < 1e-12:
            snapshots.append(t.copy())
            collect.pop(0)
        a0 = a_right
        am = gen(s0 + 0.5 * h)
        a_right = gen(s0 + h)
        k1 = a0 @ t
        k2 = am @ (t + (0.5 * h) * k1)
        k3 = am @ (t + (0.5 * h) * k2)
        k4 = a_right @ (t + h * k3)
        t = t + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        defect = float(np.max(np.abs(np.einsum("bij,bkj->bik", t, t.conj()) - eye)))
        drift = max(drift, defect)
        if defect > UNITARITY_DRIFT_MAX:
            raise TransportAccuracyError(
                f"unitarity drift {defect:.2e} before projection; increase steps"
            )
        t = _polar_unitary(t)
    if collect is not None:
        if collect and abs(collect[0] - 1.0) < 1e-12:
            snapshots.append(t.copy())
        return snapshots, drift
    return t, drift


@dataclass(frozen=True)
class TransportMatrix:
    """Unitary Berry transport t(x, y) from y to x along the straight line."""

    x: tuple
    y: tuple
    matrix: np.ndarray
    drift: float  # max pre-projection unitarity defect seen on the way

    def unitarity_defect(self):
        t = self.matrix
        return float(np.max(np.abs(t @ t.conj().T - np.eye(t.shape[0]))))


def berry_transport(proj, y, x, steps=64):
    """Parallel transport of the full fiber from y to x (kappa coordinates).

    The result intertwines the projectors, P(x) t = t P(y), up to the
    integration tolerance.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    gap = float(np.min(proj.gap_at(y[np.newaxis] + np.linspace(0, 1, 9)[:, None] * (x - y))))
    if gap <= 0:
        raise BandCrossingError("band set not isolated along the transport segment")
    t, drift = _rk4_transport(proj, y[np.newaxis], x - y, steps)
    return TransportMatrix(x=tuple(x), y=tuple(y), matrix=t[0], drift=drift)


def intertwining_defect(proj, transport):
    """|| P(x) t - t P(y) || for a computed transport."""
    px = proj.projector_at(np.asarray(transport.x))
    py = proj.projector_at(np.asarray(transport.y))
    t = transport.matrix
    return float(np.max(np.abs(px @ t - t @ py)))


@dataclass(frozen=True)
class LineFrame:
    """Periodic orthonormal frame h(kappa2) on the column kappa1 = 0."""

    proj: ProjectorFamily
    values: np.ndarray  # (N2, n, m)
    drift: float

    @property
    def n2(self):
        return self.values.shape[0]

    def kappa2(self):
        return np.arange(self.n2) / self.n2


def _unitary_log(w, tol=1e-6):
    """Principal logarithm of a unitary matrix, eigenphases in (-pi, pi].

    When an eigenphase sits within ``tol`` of the cut at pi the cut is
    rotated into the widest angular gap between eigenphases, which keeps the
    branch single-valued; the resulting frame closure is equally valid and
    the transition winding is unaffected.
    """
    vals, vecs = np.linalg.eig(w)
    phases = np.angle(vals)
    if np.any(np.abs(np.abs(phases) - np.pi) < tol):
        order = np.sort(phases)
        gaps = np.diff(np.concatenate([order, [order[0] + 2 * np.pi]]))
        if np.max(gaps) < 4 * tol:
            raise BranchAmbiguityError("holonomy eigenphases leave no branch cut")
        i = int(np.argmax(gaps))
        cut = order[i] + 0.5 * gaps[i] + np.pi
        phases = (phases - cut) % (2 * np.pi) + cut - 2 * np.pi
    # w is normal, so eig returns a well-conditioned (near-unitary) basis
    return vecs @ np.diag(1j * phases) @ np.linalg.inv(vecs)


def initial_line_frame(proj, n2, substeps=None):
    """Exactly periodic orthonormal frame along kappa2 at kappa1 = 0.

    Parallel-transports a seed basis over one kappa2 period, measures the
    glued closing defect W and distributes exp(-kappa2 log W) so the frame
    closes exactly.  The single line is cheap, so it defaults to at least
    512 integration steps regardless of the grid resolution.
    """
    n = proj.dim
    m = proj.rank
    if substeps is None:
        substeps = max(DEFAULT_SUBSTEPS, -(-512 // n2))
    seed = proj.basis_at(np.zeros(2))
    starts = np.array([[0.0, 0.0]])
    collect = np.arange(n2 + 1) / n2
    snaps, drift = _rk4_transport(
        proj, starts, np.array([0.0, 1.0]), steps=substeps * n2, collect_at=collect
    )
    g = np.stack([s[0] @ seed for s in snaps])  # (n2+1, n, m)
    v2 = proj.family.v2
    glued_end = np.linalg.solve(v2, g[-1])
    w = g[0].conj().T @ glued_end
    if np.max(np.abs(w.conj().T @ w - np.eye(m))) > 1e-7:
        raise TransportAccuracyError("closing defect is not unitary; increase steps")
    logw = _unitary_log(w)
    kappa2 = np.arange(n2) / n2
    values = np.empty((n2, n, m), dtype=complex)
    for j in range(n2):
        correction = _expm_scaled(logw, -kappa2[j])
        values[j] = g[j] @ correction
    return LineFrame(proj=proj, values=values, drift=drift)


def _expm_scaled(logw, factor):
    """exp(factor * logw) for the (normal) logarithm produced above."""
    vals, vecs = np.linalg.eig(logw)
    return vecs @ np.diag(np.exp(factor * vals)) @ np.linalg.inv(vecs)


@dataclass(frozen=True)
class Frame:
    """Orthonormal frame phi_j(kappa) over the torus grid.

    ``values[i, j]`` holds the (n, m) frame at kappa = (i/N1, j/N2); the
    extra ``end_slice[j]`` carries the transported frame at kappa1 = 1,
    which the transition function compares against column 0.
    """

    proj: ProjectorFamily
    values: np.ndarray  # (N1, N2, n, m)
    end_slice: np.ndarray  # (N2, n, m)
    drift: float
    canonical: bool = False
    theta: int | None = None
    # canonical frames satisfy phi(k1, k2 + 1) = exp(2i*pi*k2_twist*k1) V2 phi;
    # the transported (non-canonical) frame is exactly periodic, twist 0
    k2_twist: int = 0
    # kappa1-phase rate samples of the canonical twist: phi_canonical =
    # exp(i*kappa1*twist(kappa2)) phi_transported; None before the gauge fix
    twist_samples: np.ndarray | None = None

    @property
    def n1(self):
        return self.values.shape[0]

    @property
    def n2(self):
        return self.values.shape[1]

    @property
    def rank(self):
        return self.values.shape[-1]

    def kappa1(self):
        return np.arange(self.n1) / self.n1

    def kappa2(self):
        return np.arange(self.n2) / self.n2


def extend_frame(line, proj, n1, substeps=DEFAULT_SUBSTEPS):
    """Extend a periodic line frame over the torus by kappa1-transport.

    All kappa2 columns are propagated together; each of the n1 grid cells is
    integrated with ``substeps`` fourth-order steps (2*N1 steps per column
    by default).
    """
    n2 = line.n2
    h = line.values
    starts = np.stack([np.zeros(n2), line.kappa2()], axis=-1)
    collect = np.arange(n1 + 1) / n1
    snaps, drift = _rk4_transport(
        proj, starts, np.array([1.0, 0.0]), steps=substeps * n1, collect_at=collect
    )
    values = np.empty((n1, n2, proj.dim, proj.rank), dtype=complex)
    for i in range(n1):
        values[i] = snaps[i] @ h
    end_slice = snaps[n1] @ h
    return Frame(
        proj=proj,
        values=values,
        end_slice=end_slice,
        drift=max(drift, line.drift),
    )


@dataclass(frozen=True)
class TransitionFunction:
    """Unitary alpha(kappa2) glueing the frame across one kappa1 period."""

    kappa2: np.ndarray
    matrices: np.ndarray  # (N2, m, m)
    theta: int | None  # rank-1 only: minus the winding of alpha

    def scalars(self):
        if self.matrices.shape[-1] != 1:
            raise ValueError("scalar transition requires a rank-1 frame")
        return self.matrices[:, 0, 0]


def transition_function(frame, proj=None):
    """alpha(kappa2) = <glued phi_i(1, kappa2), phi_j(0, kappa2)>.

    The frame at kappa1 = 1 is pulled back through the family's gluing
    unitary V1 and compared with the frame at kappa1 = 0.  For rank-1
    frames the integer theta is minus the total winding of alpha.
    """
    proj = proj if proj is not None else frame.proj
    v1 = proj.family.v1
    glued = np.einsum("ab,jbm->jam", np.linalg.inv(v1), frame.end_slice)
    alpha = np.einsum("jam,jan->jmn", glued.conj(), frame.values[0])
    m = frame.rank
    defect = np.max(
        np.abs(np.einsum("jmn,jkn->jmk", alpha, alpha.conj()) - np.eye(m))
    )
    if defect > 1e-6:
        raise NumericValidityError(
            f"transition function departs from unitarity by {defect:.2e}"
        )
    theta = None
    if m == 1:
        a = alpha[:, 0, 0]
        increments = np.angle(np.roll(a, -1) / a)
        # the winding of alpha equals the band Chern number in the
        # plaquette orientation frozen in the topology module
        theta = int(np.rint(np.sum(increments) / (2.0 * np.pi)))
    return TransitionFunction(kappa2=frame.kappa2(), matrices=alpha, theta=theta)


def _frame_plaquette_phases(frame):
    """Principal plaquette phases of a rank-1 frame, shape (N1, N2).

    Orientation matches the link-variable Chern convention, so the total is
    2*pi times the band's Chern number.
    """
    if frame.rank != 1:
        raise ValueError("plaquette curvature implemented for rank-1 frames")
    u = np.concatenate([frame.values, frame.end_slice[np.newaxis]], axis=0)
    # wrap row kappa2 = 1 through the V2 gluing
    v2 = frame.proj.family.v2
    wrap = np.einsum("ab,ibm->iam", v2, u[:, 0])
    u = np.concatenate([u, wrap[:, np.newaxis]], axis=1)  # (N1+1, N2+1, n, 1)
    d1 = np.einsum("ijam,ijam->ij", u[:-1, :].conj(), u[1:, :])  # kappa1 links
    d2 = np.einsum("ijam,ijam->ij", u[:, :-1].conj(), u[:, 1:])  # kappa2 links
    prod = d1[:, :-1].conj() * d2[1:, :].conj() * d1[:, 1:] * d2[:-1, :]
    return np.angle(prod)


def mean_curvature(frame, integer_tol=1e-4):
    """Running curvature integral Omega_bar(kappa2) and its endpoint theta.

    Omega_bar is accumulated from the frame's plaquette phases row by row;
    the endpoint Omega_bar(1) equals 2*pi times an integer (the Chern
    number) up to the certification tolerance.
    """
    phases = _frame_plaquette_phases(frame)
    rows = phases.sum(axis=0)  # one value per kappa2 cell
    omega = np.concatenate([[0.0], np.cumsum(rows)])  # samples at j/N2, j=0..N2
    total = omega[-1] / (2.0 * np.pi)
    theta = int(np.rint(total))
    if abs(total - theta) > integer_tol:
        raise GridRefinementNeeded(
            f"curvature integral {total:.6f} is not integer within {integer_tol}"
        )
    return omega, theta


def canonical_gauge(frame, theta):
    """Twist a rank-1 frame so alpha(kappa2) = exp(-2*pi*i*theta*kappa2).

    Multiplies by exp(i*kappa1*(2*pi*kappa2*theta - W(kappa2))) where W is
    minus the unwrapped transition phase (the curvature strip integral, up
    to discretization); using the transition phase itself makes the
    canonical form exact to floating precision.

    The twist is linear in kappa1 but not periodic in kappa2, so the
    canonical frame picks up the exact wrap factor recorded in
    ``k2_twist``: phi(k1, k2+1) = exp(2i*pi*(theta + w)*k1) V2 phi(k1, k2),
    with w the winding of the original transition function.
    """
    if frame.rank != 1:
        raise ValueError("canonical gauge requires a rank-1 frame")
    alpha = transition_function(frame).scalars()
    increments = np.angle(np.roll(alpha, -1) / alpha)
    winding = int(np.rint(np.sum(increments) / (2.0 * np.pi)))
    w = -np.unwrap(np.angle(alpha))
    kappa1 = frame.kappa1()
    kappa2 = frame.kappa2()
    twist = 2.0 * np.pi * kappa2 * theta - w  # (N2,)
    phase = np.exp(1j * kappa1[:, None] * twist[None, :])
    values = frame.values * phase[:, :, None, None]
    end_slice = frame.end_slice * np.exp(1j * twist)[:, None, None]
    return replace(frame, values=values, end_slice=end_slice, canonical=True,
                   theta=int(theta), k2_twist=int(theta) + winding,
                   twist_samples=twist)


def build_frame(proj, n1, n2, substeps=DEFAULT_SUBSTEPS, canonical=False):
    """Line frame + extension in one call; optionally canonical for m = 1.

    Retries with doubled step counts when the integrator requests more
    resolution (strongly curved bands on coarse grids).
    """
    sub = substeps
    for attempt in range(4):
        try:
            line = initial_line_frame(proj, n2)
            frame = extend_frame(line, proj, n1, sub)
            break
        except TransportAccuracyError:
            if attempt == 3:
                raise
            sub *= 2
    if canonical:
        tf = transition_function(frame)
        frame = canonical_gauge(frame, tf.theta)
    return frame
