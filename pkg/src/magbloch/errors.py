"""Exception types shared across the package.

Everything numerical that can fail in a recoverable way (too coarse a grid,
too few integration steps, a branch ambiguity) derives from
:class:`NumericValidityError`, so callers (and the CLI) can distinguish
"your request was malformed" from "the computation did not certify".
"""


class NumericValidityError(RuntimeError):
    """A computation finished but failed its own validity criterion."""


class NonHermitianError(ValueError):
    """Input matrix violates the hermiticity tolerance."""


class BandCrossingError(NumericValidityError):
    """Bands that were required to be isolated touch or cross on the grid."""


class GridRefinementNeeded(NumericValidityError):
    """Link overlaps vanished or a plaquette phase reached pi.

    Raised after the automatic retries (grid doublings) are exhausted.
    """


class TransportAccuracyError(NumericValidityError):
    """Parallel transport lost unitarity beyond tolerance; more steps needed."""


class BranchAmbiguityError(NumericValidityError):
    """A matrix logarithm has an eigenvalue at -1; the branch is ambiguous."""
