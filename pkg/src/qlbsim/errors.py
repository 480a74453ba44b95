"""Exception types raised across the package."""


class QLBError(Exception):
    """Base class for all package errors."""


class ValidationError(QLBError, ValueError):
    """Input data violates a structural requirement (shape, symmetry, keys)."""


class SpectralDomainError(QLBError, ValueError):
    """A spectrum lies outside the domain where the unit-modulus split exists."""


class InfeasibleGammaError(QLBError, ValueError):
    """The requested weight gamma leaves the feasibility window.

    ``index`` and ``eigenvalue`` identify the first eigenvalue whose
    radicand went negative.
    """

    def __init__(self, message, index=None, eigenvalue=None, window=None):
        super().__init__(message)
        self.index = index
        self.eigenvalue = eigenvalue
        self.window = window


class DiagonalizabilityError(QLBError, ValueError):
    """Eigenbasis too ill-conditioned for a spectral reconstruction."""


class InstabilityError(QLBError, RuntimeError):
    """A lattice run blew up."""


class CutoffError(QLBError, ValueError):
    """Fock-space truncation loses more norm than allowed."""

    def __init__(self, message, required_cutoff=None):
        super().__init__(message)
        self.required_cutoff = required_cutoff


class HeraldError(QLBError, RuntimeError):
    """The heralded branch has (numerically) zero probability."""


class ConfigError(QLBError, ValueError):
    """A JSON configuration is malformed or out of range."""
