"""Exception types shared across the package."""


class RydexError(Exception):
    """Base class for package-specific failures."""


class InvalidPairError(RydexError, ValueError):
    """Interaction requested for an invalid site pair (i == j or out of range)."""


class DisorderOrderingError(RydexError, RuntimeError):
    """Disorder draws kept violating the site-ordering requirement."""


class EmptySectorError(RydexError, ValueError):
    """Requested excitation sector contains no basis states."""


class FacilitationResonanceError(RydexError, ValueError):
    """A perturbative denominator Delta + V crossed the facilitation guard."""


class PerturbativeValidityError(RydexError, ValueError):
    """Dressing outside the weak-drive window Omega <= eps * |Delta|."""


class SingularDenominatorError(RydexError, ZeroDivisionError):
    """Degenerate energy denominator in the perturbative oracle."""


class StiffnessError(RydexError, RuntimeError):
    """Propagation accuracy target could not be met (norm/trace drift)."""


class DimensionCapError(RydexError, ValueError):
    """Problem dimension exceeds the configured dense cap."""


class EmptyPostSelectionError(RydexError, ValueError):
    """Post-selection probability below the configured floor."""


class DegenerateBandError(RydexError, RuntimeError):
    """Band touching detected on the Brillouin-zone grid."""


class DesignFailureError(RydexError, RuntimeError):
    """Coupling design did not converge to the requested tolerance."""


class ConfigError(RydexError, ValueError):
    """Run configuration rejected (unknown key, missing unit, bad value)."""
