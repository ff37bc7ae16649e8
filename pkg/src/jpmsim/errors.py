"""Exception and warning types shared across the package."""


class JpmsimError(Exception):
    """Base class for all errors raised by this package."""


class TruncationError(JpmsimError):
    """Fock-space cutoff is too small for the requested state.

    Carries the truncated tail weight in ``tail`` and the tolerance it
    exceeded in ``tol``.
    """

    def __init__(self, message: str, tail: float, tol: float):
        super().__init__(message)
        self.tail = tail
        self.tol = tol


class InvariantViolation(JpmsimError):
    """A numerical result violated a structural invariant (Hermiticity,
    trace preservation, positivity, or file integrity) beyond tolerance."""


class ZeroProbabilityOutcome(JpmsimError):
    """Conditioning was requested on an outcome whose probability is below
    the floor where normalization is meaningful."""


class RegimeViolation(JpmsimError):
    """A limiting-regime formula was requested outside its declared
    rate-ratio range."""


class PoleEvaluation(JpmsimError):
    """A Laplace-domain expression was evaluated at (or too close to) a
    pole of its denominator."""


class GridTooCoarse(JpmsimError):
    """The finite-difference stencil error on the supplied time grid is too
    large to resolve the requested residual tolerance."""


class AnchorDegenerate(JpmsimError):
    """The reference curve vanishes at the anchor point, so rescaling is
    undefined (anchoring at alpha = 0 is invalid)."""


class ConfigError(JpmsimError):
    """A run configuration failed to parse or validate.  The message names
    the offending line or field."""


class SpectralFallbackWarning(UserWarning):
    """Eigendecomposition of the Liouvillian is too ill-conditioned; the
    propagator silently switched to the scaling-and-squaring path.  This is
    a notice, not an error: results stay accurate, only slower."""
