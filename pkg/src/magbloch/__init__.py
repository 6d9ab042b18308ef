"""Magnetic Bloch bands of the Hofstadter model: spectra, Chern numbers,
Berry frames and effective Peierls Hamiltonians."""

from .bundle import (
    Frame,
    LineFrame,
    ProjectorFamily,
    TransitionFunction,
    TransportMatrix,
    berry_transport,
    build_frame,
    canonical_gauge,
    extend_frame,
    initial_line_frame,
    intertwining_defect,
    mean_curvature,
    transition_function,
)
from .effective import (
    EffectiveSymbol,
    SlowFields,
    connection_coefficients,
    effective_symbol,
    principal_symbol,
    rammal_wilkinson,
    slow_fields,
    subprincipal_symbol,
    total_symbol,
    uniform_fields,
)
from .hofstadter import (
    BandStructure,
    BlochMatrixFamily,
    ButterflyData,
    IntervalSet,
    KGrid,
    RationalFlux,
    band_intervals,
    band_structure,
    butterfly,
    farey,
    hausdorff_distance,
    hofstadter_family,
    hofstadter_matrix,
    rational_flux,
    spectrum_intervals,
)
from .linalg import EigenDecomposition, eigh, make_grid
from .peierls import (
    IsospectralityReport,
    PeierlsParams,
    SubbandMatch,
    isospectrality_report,
    model_dispersion,
    peierls_family,
    peierls_generators,
    peierls_matrix,
    subband_chern_experiment,
    theta_chern_numbers,
    tilde_b,
)
from .topology import (
    ChernReport,
    GapLabelSet,
    band_chern_from_gaps,
    chern_numbers,
    cluster_chern_numbers,
    colored_butterfly,
    gap_labels_diophantine,
    hofstadter_chern,
)

__version__ = "0.1.0"
