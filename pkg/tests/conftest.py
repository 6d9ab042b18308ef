import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from magbloch.bundle import ProjectorFamily, build_frame
from magbloch.effective import effective_symbol
from magbloch.hofstadter import hofstadter_family, rational_flux
from magbloch.linalg import eigh


def rw_perturbation_oracle(family, band, k, step=1e-6):
    """Sum-over-states Rammal-Wilkinson value, independent of any frame.

    M = -Im sum_{m != n} <n|d1 H|m><m|d2 H|n> / (E_m - E_n), with the
    Hamiltonian derivatives taken by central differences of the analytic
    family.
    """
    k = np.asarray(k, dtype=float)
    dec = eigh(family(k))
    w, v = dec.eigenvalues, dec.eigenvectors
    n = band - 1
    dh1 = (family(k + [step, 0]) - family(k - [step, 0])) / (2 * step)
    dh2 = (family(k + [0, step]) - family(k - [0, step])) / (2 * step)
    phi = v[:, n]
    total = 0.0 + 0.0j
    for m in range(len(w)):
        if m == n:
            continue
        total += (
            (phi.conj() @ dh1 @ v[:, m])
            * (v[:, m].conj() @ dh2 @ phi)
            / (w[m] - w[n])
        )
    return -float(np.imag(total))


@pytest.fixture(scope="session")
def third_band2_frame():
    """Canonical frame of the flux-1/3 middle band at production grid.

    Built once per session; the effective-module tests and the acceptance
    suite share it.
    """
    fam = hofstadter_family(rational_flux(1, 3))
    proj = ProjectorFamily(fam, bands=(2,))
    return build_frame(proj, 256, 768, canonical=True), proj, fam


@pytest.fixture(scope="session")
def third_band2_symbol(third_band2_frame):
    frame, proj, fam = third_band2_frame
    return effective_symbol(proj, frame=frame), fam
