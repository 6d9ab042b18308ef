import numpy as np
import pytest

from magbloch.errors import BandCrossingError
from magbloch.hofstadter import butterfly, hofstadter_family, rational_flux
from magbloch.linalg import make_grid
from magbloch.topology import (
    band_chern_from_gaps,
    chern_numbers,
    cluster_chern_from_gaps,
    cluster_chern_numbers,
    colored_butterfly,
    detect_clusters,
    gap_labels_diophantine,
    hofstadter_chern,
)


def brute_force_label(p, q, r):
    """Independent residue search for the diophantine label."""
    sols = [t for t in range(-q, q + 1) if (p * t - r) % q == 0 and 2 * abs(t) < q]
    return sols[0] if sols else None


def test_flux_third_paper_values():
    report = hofstadter_chern(rational_flux(1, 3))
    assert report.per_band == (1, -2, 1)
    assert report.per_gap == (1, -1)
    assert report.max_plaquette_phase < np.pi
    assert report.integrality_defect < 1e-6


def test_constant_family_flat_bundle():
    report = hofstadter_chern(rational_flux(0, 1))
    assert report.per_band == (0,)


def test_gap_labels_examples():
    assert gap_labels_diophantine(rational_flux(1, 3)).labels == (1, -1)
    assert gap_labels_diophantine(rational_flux(1, 2)).labels == (None,)
    assert gap_labels_diophantine(rational_flux(1, 5)).labels == (1, 2, -2, -1)


def test_gap_labels_against_residue_search():
    for p, q in [(1, 5), (2, 5), (3, 7), (5, 8), (4, 9)]:
        labels = gap_labels_diophantine(rational_flux(p, q)).labels
        expected = tuple(brute_force_label(p, q, r) for r in range(1, q))
        assert labels == expected


def test_band_chern_from_gaps():
    assert band_chern_from_gaps(gap_labels_diophantine(rational_flux(1, 3))) == (1, -2, 1)
    assert band_chern_from_gaps(gap_labels_diophantine(rational_flux(1, 5))) == (
        1, 1, -4, 1, 1)
    assert band_chern_from_gaps(gap_labels_diophantine(rational_flux(0, 1))) == (0,)
    # closed central gap leaves the adjacent bands undefined
    assert band_chern_from_gaps(gap_labels_diophantine(rational_flux(1, 4))) == (
        1, None, None, 1)


def test_crossing_rejected_per_band():
    with pytest.raises(BandCrossingError):
        hofstadter_chern(rational_flux(1, 2))


def test_cluster_chern_even_flux():
    fam = hofstadter_family(rational_flux(1, 4))
    clusters, values = cluster_chern_numbers(fam)
    assert clusters == [(0, 1), (1, 3), (3, 4)]
    assert values == [1, -2, 1]
    gl = gap_labels_diophantine(rational_flux(1, 4))
    assert cluster_chern_from_gaps(gl, clusters) == (1, -2, 1)


def test_detect_clusters_odd_flux_isolated():
    fam = hofstadter_family(rational_flux(2, 5))
    grid = make_grid(fam.periods[0], fam.periods[1], 40, 40)
    assert detect_clusters(fam, grid) == [(n, n + 1) for n in range(5)]


def test_oracle_equivalence_small_denominators():
    for q in range(1, 8):
        for p in range(0, q):
            if np.gcd(p, q) != 1:
                continue
            flux = rational_flux(p, q)
            fam = hofstadter_family(flux)
            clusters, values = cluster_chern_numbers(fam)
            expected = cluster_chern_from_gaps(gap_labels_diophantine(flux), clusters)
            assert tuple(values) == expected, (str(flux), clusters)


def test_zero_sum_rule():
    for p, q in [(1, 3), (2, 5), (3, 7), (1, 6)]:
        fam = hofstadter_family(rational_flux(p, q))
        _, values = cluster_chern_numbers(fam)
        assert sum(values) == 0


def test_grid_independence():
    for p, q in [(1, 3), (2, 5)]:
        flux = rational_flux(p, q)
        r40 = hofstadter_chern(flux, 40)
        r80 = hofstadter_chern(flux, 80)
        assert r40.per_band == r80.per_band


def test_colored_butterfly_labels():
    data = colored_butterfly(butterfly(3, grid_density=48))
    rows = {str(f): labels for f, _, labels in data.rows}
    assert rows["1/3"] == (1, -1)
    assert rows["0/1"] == ()
    assert rows["1/2"] == ()  # single merged interval, no open gap


def test_colored_butterfly_even_q_skips_closed_gap():
    data = colored_butterfly(butterfly(4, grid_density=48))
    rows = {str(f): (iv, labels) for f, iv, labels in data.rows}
    iv, labels = rows["1/4"]
    assert iv.count == 3
    assert labels == (1, -1)  # central (absent) label skipped by band counting
