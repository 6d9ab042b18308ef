import numpy as np
import pytest

from conftest import rw_perturbation_oracle
from magbloch.bundle import ProjectorFamily, build_frame
from magbloch.effective import (
    band_energies,
    connection_coefficients,
    effective_symbol,
    frame_orthogonal_derivative,
    frame_tangent_rate,
    principal_symbol,
    rammal_wilkinson,
    slow_fields,
    subprincipal_symbol,
    total_symbol,
    uniform_fields,
)
from magbloch.errors import NumericValidityError
from magbloch.hofstadter import BlochMatrixFamily, hofstadter_family, rational_flux
from magbloch.interp import PeriodicSpline1D, PeriodicSpline2D
from magbloch.peierls import model_dispersion


def zero_chern_family():
    """Real two-band model: time-reversal symmetric, both Chern numbers 0."""

    def evaluate(k):
        k = np.asarray(k, dtype=float)
        m = 2.5 - np.cos(k[..., 0]) - np.cos(k[..., 1])
        sx = np.sin(k[..., 0])
        h = np.zeros(k.shape[:-1] + (2, 2), dtype=complex)
        h[..., 0, 0] = m
        h[..., 1, 1] = -m
        h[..., 0, 1] = sx
        h[..., 1, 0] = sx
        return h

    return BlochMatrixFamily(dim=2, periods=(2 * np.pi, 2 * np.pi), evaluator=evaluate)


def test_interpolation_periodic_and_accurate():
    n = 64
    x = np.arange(n) / n * 2 * np.pi
    f = np.cos(3 * x) + 0.5 * np.sin(x)
    sp = PeriodicSpline1D(f, 2 * np.pi)
    xs = np.linspace(0, 4 * np.pi, 257)
    exact = np.cos(3 * xs) + 0.5 * np.sin(xs)
    assert np.max(np.abs(sp(xs) - exact)) < 5e-5
    dexact = -3 * np.sin(3 * xs) + 0.5 * np.cos(xs)
    assert np.max(np.abs(sp.derivative(xs) - dexact)) < 5e-4
    # 2D tensor product
    y = np.arange(48) / 48 * np.pi
    g = np.cos(2 * x)[:, None] * np.cos(4 * y)[None, :]
    sp2 = PeriodicSpline2D(g, (2 * np.pi, np.pi))
    xs2, ys2 = np.meshgrid(np.linspace(0, 2 * np.pi, 31), np.linspace(0, np.pi, 29))
    exact2 = np.cos(2 * xs2) * np.cos(4 * ys2)
    assert np.max(np.abs(sp2(xs2, ys2) - exact2)) < 2e-4
    dx = -2 * np.sin(2 * xs2) * np.cos(4 * ys2)
    assert np.max(np.abs(sp2.dx1(xs2, ys2) - dx)) < 2e-3


def test_connection_constant_frame_vanishes():
    h0 = np.diag([0.0, 2.0]).astype(complex)

    def evaluate(k):
        k = np.asarray(k, dtype=float)
        return np.broadcast_to(h0, k.shape[:-1] + (2, 2)).copy()

    fam = BlochMatrixFamily(dim=2, periods=(1.0, 1.0), evaluator=evaluate)
    proj = ProjectorFamily(fam, bands=(1,))
    frame = build_frame(proj, 16, 16, canonical=True)
    a1, a2 = connection_coefficients(frame)
    assert np.max(np.abs(a1)) < 1e-10
    assert np.max(np.abs(a2)) < 1e-10


def test_connection_a1_independent_of_kappa1(third_band2_symbol):
    sym, _ = third_band2_symbol
    variation = np.max(sym.a1_samples.max(axis=0) - sym.a1_samples.min(axis=0))
    assert variation < 1e-5


def test_connection_combination_periodic(third_band2_frame):
    # A_2(k) - theta*kappa1 continues periodically across both seams: the
    # independently transported end column reproduces row 0 plus theta
    frame, proj, fam = third_band2_frame
    a1, a2 = connection_coefficients(frame)
    n1 = frame.n1
    comb = a2 - frame.theta * (np.arange(n1) / n1)[:, None]
    # kappa2 seam: compare the two adjacent columns' combination values
    assert np.abs(comb[:, 0] - comb[:, -1]).max() < np.abs(np.diff(comb, axis=1)).max() * 1.5 + 1e-6
    # kappa1 wrap relation via the stored end slice:
    u0 = frame.values[0, :, :, 0]
    uend = np.einsum("ab,jb->ja", np.linalg.inv(proj.family.v1), frame.end_slice[:, :, 0])
    # alpha-consistency of the wrap is the geometric content
    alpha = np.einsum("ja,ja->j", uend.conj(), u0)
    target = np.exp(-2j * np.pi * frame.theta * frame.kappa2())
    assert np.max(np.abs(alpha - target)) < 1e-6


def test_rammal_wilkinson_flat_family():
    h0 = np.diag([0.0, 1.0, 2.0]).astype(complex)

    def evaluate(k):
        k = np.asarray(k, dtype=float)
        return np.broadcast_to(h0, k.shape[:-1] + (3, 3)).copy()

    fam = BlochMatrixFamily(dim=3, periods=(1.0, 1.0), evaluator=evaluate)
    proj = ProjectorFamily(fam, bands=(2,))
    frame = build_frame(proj, 16, 16, canonical=True)
    energies = band_energies(frame)
    rw = rammal_wilkinson(frame, fam, energies)
    assert np.max(np.abs(rw)) < 1e-10


def test_rammal_wilkinson_against_perturbation_oracle(third_band2_symbol):
    sym, fam = third_band2_symbol
    n1, n2 = sym.rw_samples.shape
    k1 = np.arange(n1) / n1 * fam.periods[0]
    k2 = np.arange(n2) / n2 * fam.periods[1]
    for i, j in [(0, 0), (17, 200), (128, 400), (200, 767), (255, 100)]:
        oracle = rw_perturbation_oracle(fam, 2, (k1[i], k2[j]))
        assert abs(sym.rw_samples[i, j] - oracle) < 1e-6


def test_rammal_wilkinson_real(third_band2_symbol):
    sym, _ = third_band2_symbol
    assert np.isrealobj(sym.rw_samples)


def test_rammal_wilkinson_gauge_invariant():
    from dataclasses import replace

    fam = hofstadter_family(rational_flux(1, 3))
    proj = ProjectorFamily(fam, bands=(2,))
    frame = build_frame(proj, 96, 96, canonical=True)
    energies = band_energies(frame)
    rw0 = rammal_wilkinson(frame, fam, energies)
    rng = np.random.default_rng(5)
    k1 = frame.kappa1()
    k2 = frame.kappa2()
    for _ in range(3):
        c = rng.normal(size=4) * 0.3
        lam = (
            c[0] * np.sin(2 * np.pi * k1)[:, None]
            + c[1] * np.cos(2 * np.pi * k1)[:, None]
            + c[2] * np.sin(2 * np.pi * k2)[None, :]
            + c[3] * np.sin(2 * np.pi * (k1[:, None] + k2[None, :]))
        )
        phase = np.exp(1j * lam)
        twisted = replace(
            frame,
            values=frame.values * phase[:, :, None, None],
            end_slice=frame.end_slice * phase[0][:, None, None],
        )
        rw1 = rammal_wilkinson(twisted, fam, energies)
        assert np.max(np.abs(rw1 - rw0)) < 1e-6


def test_connection_gauge_shift(third_band2_frame):
    # phi -> exp(i lambda) phi shifts A_j by d_j lambda / (2 pi)
    from dataclasses import replace

    frame, proj, fam = third_band2_frame
    a1_0, a2_0 = connection_coefficients(frame)
    rng = np.random.default_rng(9)
    k1 = frame.kappa1()
    k2 = frame.kappa2()
    c = rng.normal(size=2) * 0.2
    lam = c[0] * np.sin(2 * np.pi * k1)[:, None] + c[1] * np.cos(2 * np.pi * k2)[None, :]
    dlam1 = 2 * np.pi * c[0] * np.cos(2 * np.pi * k1)[:, None] * np.ones_like(lam)
    dlam2 = -2 * np.pi * c[1] * np.sin(2 * np.pi * k2)[None, :] * np.ones_like(lam)
    phase = np.exp(1j * lam)
    twisted = replace(
        frame,
        values=frame.values * phase[:, :, None, None],
        end_slice=frame.end_slice * phase[0][:, None, None],
    )
    a1_1, a2_1 = connection_coefficients(twisted)
    assert np.max(np.abs((a1_1 - a1_0) - dlam1 / (2 * np.pi))) < 1e-6
    assert np.max(np.abs((a2_1 - a2_0) - dlam2 / (2 * np.pi))) < 1e-6


def test_derivative_richardson_ratio():
    # validate d phi against 4-point stencils at halved steps: the
    # second-order estimate's deviation from the fourth-order one is the
    # truncation term and must shrink by ~4 per halving
    fam = hofstadter_family(rational_flux(1, 3))
    proj = ProjectorFamily(fam, bands=(2,))
    fine = build_frame(proj, 96, 192, canonical=True)
    coarse = build_frame(proj, 48, 96, canonical=True)
    for axis in (0, 1):
        err_fine = np.max(np.abs(
            frame_tangent_rate(fine, axis, order=2)
            - frame_tangent_rate(fine, axis, order=4)
        ))
        err_coarse = np.max(np.abs(
            frame_tangent_rate(coarse, axis, order=2)
            - frame_tangent_rate(coarse, axis, order=4)
        ))
        ratio = err_coarse / err_fine
        assert 0.95 * 4 <= ratio <= 1.05 * 4, (axis, ratio)
        # the orthogonal parts obey the same convergence
        ortho_fine = np.max(np.abs(
            frame_orthogonal_derivative(fine, axis, order=2)
            - frame_orthogonal_derivative(fine, axis, order=4)
        ))
        ortho_coarse = np.max(np.abs(
            frame_orthogonal_derivative(coarse, axis, order=2)
            - frame_orthogonal_derivative(coarse, axis, order=4)
        ))
        assert 0.8 * 4 <= ortho_coarse / ortho_fine <= 1.2 * 4


def test_principal_symbol_trivial_and_shift(third_band2_symbol):
    sym, fam = third_band2_symbol
    n1, n2 = sym.energy_samples.shape
    k = np.array([5 / n1 * fam.periods[0], 7 / n2 * fam.periods[1]])
    h0_free = principal_symbol(sym, slow_fields())
    assert abs(h0_free(k, np.zeros(2)) - sym.energy_samples[5, 7]) < 1e-12
    shifted = principal_symbol(sym, uniform_fields(phi_const=0.37))
    assert abs(shifted(k, np.array([1.0, -2.0])) - h0_free(k, np.array([1.0, -2.0])) - 0.37) < 1e-12


def test_principal_symbol_model_dispersion():
    # E_q model with a linear vector potential: direct substitution
    q = 3
    energy = model_dispersion(q)
    n = 96
    l1, l2 = 2 * np.pi / q, 2 * np.pi / q
    k1 = np.arange(n) / n * l1
    k2 = np.arange(n) / n * l2
    samples = energy(np.stack(np.meshgrid(k1, k2, indexing="ij"), axis=-1))
    spline = PeriodicSpline2D(samples, (l1, l2))

    def a_field(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        out[..., 1] = 0.05 * r[..., 0]  # A = (0, B r1): fine for h0
        return out

    fields = slow_fields(a=a_field)
    h0 = principal_symbol(spline, fields)
    rng = np.random.default_rng(2)
    for _ in range(20):
        k = rng.uniform(0, 2 * np.pi, size=2)
        r = rng.uniform(-3, 3, size=2)
        kt = k - a_field(r)
        assert abs(h0(k, r) - energy(kt)) < 1e-4


def test_subprincipal_zero_field_vanishes(third_band2_symbol):
    sym, _ = third_band2_symbol
    h1 = subprincipal_symbol(sym, slow_fields())
    rng = np.random.default_rng(1)
    for _ in range(10):
        k = rng.uniform(0, 2, size=2)
        r = rng.uniform(-2, 2, size=2)
        assert h1(k, r) == 0.0


def test_subprincipal_critical_point(third_band2_symbol):
    # at a critical point of E with Phi = 0 only the Rammal-Wilkinson term
    # survives: h1 = B * M(kt)
    sym, _ = third_band2_symbol
    b = 0.07
    h1 = subprincipal_symbol(sym, uniform_fields(b=b))
    r = np.zeros(2)
    k = np.zeros(2)  # symmetric point: dE = 0 there
    assert abs(sym.energy.dx1(0.0, 0.0)) < 1e-10
    assert abs(sym.energy.dx2(0.0, 0.0)) < 1e-10
    assert abs(h1(k, r) - b * sym.rw(0.0, 0.0)) < 1e-10


def test_subprincipal_constant_phi_invariance(third_band2_symbol):
    sym, _ = third_band2_symbol
    fields_a = uniform_fields(b=0.02, phi_cos=[(0.3, 1.0, 0.5)])
    fields_b = uniform_fields(b=0.02, phi_const=11.0, phi_cos=[(0.3, 1.0, 0.5)])
    h1a = subprincipal_symbol(sym, fields_a)
    h1b = subprincipal_symbol(sym, fields_b)
    k, r = np.array([0.9, 2.1]), np.array([0.3, -0.7])
    assert h1a(k, r) == h1b(k, r)


def test_subprincipal_rejects_bad_gauge(third_band2_symbol):
    sym, _ = third_band2_symbol

    def a_field(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        out[..., 1] = 0.1 * r[..., 0]
        return out

    with pytest.raises(NumericValidityError):
        subprincipal_symbol(sym, slow_fields(a=a_field))


def test_slow_fields_curl_consistency_rejected():
    def a_field(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        out[..., 0] = -0.3 * r[..., 1]
        return out

    def wrong_b(r):
        return np.full(np.shape(r)[:-1], 0.5)

    with pytest.raises(NumericValidityError):
        slow_fields(a=a_field, b=wrong_b)
    fields = slow_fields(a=a_field)  # finite-difference B
    assert fields.curl_defect() < 1e-6
    assert abs(float(fields.b(np.zeros(2))) - 0.3) < 1e-6


def test_theta_zero_band_fully_periodic_connection():
    # zero-Chern band: both connection components are periodic and the h1
    # machinery reduces to the non-magnetic Peierls correction structure
    fam = zero_chern_family()
    proj = ProjectorFamily(fam, bands=(1,))
    sym = effective_symbol(proj, n1=96, n2=96)
    assert sym.theta == 0
    assert sym.a1_slope == 0
    seam = np.abs(sym.a1_samples.mean(axis=0)[0] - sym.a1_samples.mean(axis=0)[-1])
    step = np.abs(np.diff(sym.a1_samples.mean(axis=0))).max()
    assert seam < step + 1e-6
    h1 = subprincipal_symbol(sym, uniform_fields(b=0.1, phi_cos=[(0.2, 1.0, 0.0)]))
    value = h1(np.array([0.3, 0.4]), np.array([0.5, 0.6]))
    assert np.isfinite(value)


def test_total_symbol_epsilon_weighting(third_band2_symbol):
    sym, _ = third_band2_symbol
    fields = uniform_fields(b=0.05, phi_cos=[(0.1, 1.0, 0.0)])
    h0 = principal_symbol(sym, fields)
    h1 = subprincipal_symbol(sym, fields)
    h = total_symbol(sym, fields, eps=0.01)
    k, r = np.array([0.5, 1.0]), np.array([0.2, 0.9])
    assert abs(h(k, r) - (h0(k, r) + 0.01 * h1(k, r))) < 1e-14
