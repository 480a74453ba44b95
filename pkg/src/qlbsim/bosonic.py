"""Single truncated bosonic mode: ladder operators, Hermite functions, wavepackets.

Quadrature convention: ``x = (a + a^dag) / sqrt(2)``, so the displacement
``exp(theta (a^dag - a))`` shifts ``<x>`` by ``sqrt(2) theta``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.integrate import trapezoid
from scipy.special import gammaln

from .errors import CutoffError, ValidationError

VACUUM_WIDTH = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class ModeAlgebra:
    cutoff: int

    def __post_init__(self):
        if int(self.cutoff) != self.cutoff or self.cutoff < 2:
            raise ValidationError(f"cutoff must be an integer >= 2, got {self.cutoff}")

    @cached_property
    def a(self) -> np.ndarray:
        return np.diag(np.sqrt(np.arange(1, self.cutoff, dtype=float)), 1)

    @cached_property
    def adag(self) -> np.ndarray:
        return self.a.T.copy()

    @cached_property
    def x(self) -> np.ndarray:
        return (self.a + self.adag) / np.sqrt(2.0)

    @cached_property
    def displacement_generator(self) -> np.ndarray:
        """``a^dag - a`` (real antisymmetric)."""
        return self.adag - self.a

    @cached_property
    def number(self) -> np.ndarray:
        return np.diag(np.arange(self.cutoff, dtype=float))

    def commutator(self) -> np.ndarray:
        """``[a, a^dag]``; equals the identity except the last diagonal entry."""
        return self.a @ self.adag - self.adag @ self.a


@lru_cache(maxsize=64)
def _displacement(theta: float, cutoff: int) -> np.ndarray:
    d = sla.expm(theta * ModeAlgebra(cutoff).displacement_generator)
    d.setflags(write=False)
    return d


def displacement(theta: float, cutoff: int) -> np.ndarray:
    """Exact exponential of the truncated generator ``theta (a^dag - a)``."""
    return _displacement(float(theta), int(cutoff))


def hermite_functions(n: int, x) -> np.ndarray:
    """Normalised oscillator eigenfunctions ``psi_0..psi_{n-1}`` at points ``x``.

    Uses the stable three-term recurrence; returns shape ``(n, len(x))``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((n, x.size))
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for k in range(1, n - 1):
        out[k + 1] = np.sqrt(2.0 / (k + 1)) * x * out[k] - np.sqrt(k / (k + 1)) * out[k - 1]
    return out


def hermite_integrals(n: int) -> np.ndarray:
    """``int psi_k(x) dx`` for ``k < n`` (zero for odd ``k``)."""
    out = np.zeros(n)
    out[0] = np.sqrt(2.0) * np.pi ** 0.25
    for k in range(0, n - 2, 2):
        out[k + 2] = out[k] * np.sqrt((k + 1) / (k + 2))
    return out


def coherent_amplitudes(alpha: float, cutoff: int) -> np.ndarray:
    """Fock amplitudes of a real coherent state, ``e^{-a^2/2} a^n / sqrt(n!)``."""
    n = np.arange(cutoff)
    alpha = float(alpha)
    if alpha == 0.0:
        out = np.zeros(cutoff)
        out[0] = 1.0
        return out
    logmag = -0.5 * alpha ** 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.sign(alpha) ** n * np.exp(logmag)


def _projected_gaussian(center, sigma, cutoff):
    # trapezoid on a wide uniform grid is spectrally accurate for these integrands
    half = max(np.sqrt(2.0 * cutoff) + 12.0, abs(center) + 16.0 * sigma * np.sqrt(2.0))
    x = np.linspace(-half, half, 8001)
    g = np.exp(-((x - center) ** 2) / (4.0 * sigma ** 2))
    norm2 = sigma * np.sqrt(2.0 * np.pi)
    psi = hermite_functions(cutoff, x)
    c = trapezoid(psi * g, x, axis=1) / np.sqrt(norm2)
    return c


def gaussian_amplitudes(center: float, sigma: float, cutoff: int):
    """Fock amplitudes of the real wavefunction ``exp(-(x - c)^2 / (4 sigma^2))``.

    ``sigma`` is the standard deviation of ``|psi|^2``; at the vacuum width
    ``1/sqrt(2)`` this is the coherent state with amplitude ``c / sqrt(2)``.
    Other widths are projected onto Hermite functions by quadrature.
    Returns ``(amplitudes, leakage)`` where leakage is the norm lost above
    the cutoff.
    """
    if sigma < 0.5:
        raise ValidationError(f"wavepacket width {sigma} below 0.5")
    if abs(sigma - VACUUM_WIDTH) < 1e-12:
        c = coherent_amplitudes(center / np.sqrt(2.0), cutoff)
    else:
        c = _projected_gaussian(center, sigma, cutoff)
    leakage = max(0.0, 1.0 - float(np.sum(c * c)))
    return c, leakage


def required_cutoff(center: float, sigma: float, tol: float = 1e-6, start: int = 2,
                    limit: int = 4096) -> int:
    n = max(int(start), 2)
    while n <= limit:
        if gaussian_amplitudes(center, sigma, n)[1] <= tol:
            return n
        n = int(np.ceil(n * 1.25)) + 1
    raise CutoffError(f"no cutoff below {limit} captures the wavepacket")
