"""Two-pseudospin operators: streaming matrices, their diagonalisers, and gates.

Tensor order is ``qubit1 (x) qubit2``, basis ``|00>, |01>, |10>, |11>``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .bosonic import ModeAlgebra
from .errors import ValidationError

I2 = np.eye(2, dtype=complex)
SIGMA = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
AXES = ("x", "y", "z")

# generator coefficients, numerically equal
COEFF_A = np.sqrt(2.0) * np.pi / 4.0
COEFF_B = np.pi / (2.0 * np.sqrt(2.0))


def _axis(b):
    if b not in SIGMA:
        raise ValidationError(f"axis must be one of x, y, z; got {b!r}")
    return b


def pauli(qubit: int, axis: str) -> np.ndarray:
    """Pauli matrix on one of the two qubits (1 or 2), as a 4x4 operator."""
    s = SIGMA[_axis(axis)]
    if qubit == 1:
        return np.kron(s, I2)
    if qubit == 2:
        return np.kron(I2, s)
    raise ValidationError(f"qubit must be 1 or 2, got {qubit}")


BETA = np.kron(SIGMA["z"], I2)


def alpha(b: str) -> np.ndarray:
    """Streaming matrix ``-sigma^x (x) sigma^b``."""
    return -np.kron(SIGMA["x"], SIGMA[_axis(b)])


def s_gate(b: str) -> np.ndarray:
    """``(beta + alpha^b) / sqrt(2)``: Hermitian, involutive, swaps beta and alpha^b."""
    return (BETA + alpha(b)) / np.sqrt(2.0)


def s_generator(b: str) -> np.ndarray:
    """Hermitian ``H_b = A beta + B alpha^b`` with ``exp(-i H_b) = -i S_b``.

    ``A = B = pi / (2 sqrt 2)``, so ``H_b = (pi/2) S_b``.  The sign of the
    second term follows ``alpha^b`` (which carries a minus sign); writing
    ``+B sigma^x (x) sigma^b`` instead would generate ``(beta - alpha^b)/sqrt 2``.
    """
    return COEFF_A * BETA + COEFF_B * alpha(b)


def s_generator_check(b: str) -> float:
    """Spectral norm of ``exp(-i H_b) + i S_b``."""
    return float(np.linalg.norm(sla.expm(-1j * s_generator(b)) + 1j * s_gate(b), 2))


@dataclass(frozen=True)
class SpinAlgebra:
    """All streaming-related 4x4 operators, plus their algebraic residuals."""

    def alpha(self, b):
        return alpha(b)

    @property
    def beta(self):
        return BETA

    def s(self, b):
        return s_gate(b)

    def h(self, b):
        return s_generator(b)

    def residuals(self) -> dict:
        eye = np.eye(4)
        out = {}
        for b in AXES:
            a, s = alpha(b), s_gate(b)
            out[b] = {
                "alpha_involution": np.max(np.abs(a @ a - eye)),
                "anticommutator": np.max(np.abs(a @ BETA + BETA @ a)),
                "s_involution": np.max(np.abs(s @ s - eye)),
                "s_alpha_s": np.max(np.abs(s @ a @ s - BETA)),
                "s_beta_s": np.max(np.abs(s @ BETA @ s - a)),
                "generator": s_generator_check(b),
            }
        out["beta_involution"] = np.max(np.abs(BETA @ BETA - eye))
        out["coefficients"] = abs(COEFF_A - COEFF_B)
        return out


def rotation(qubit: int, axis: str, theta: float) -> np.ndarray:
    """``exp(-i theta sigma^axis)`` on one qubit."""
    return sla.expm(-1j * theta * pauli(qubit, axis))


def zz_entangler(theta: float) -> np.ndarray:
    """``exp(-i theta sigma^z_1 sigma^z_2)`` (diagonal)."""
    zz = np.kron([1.0, -1.0], [1.0, -1.0])
    return np.diag(np.exp(-1j * theta * zz))


def streaming_conjugator() -> np.ndarray:
    """``W = U_C(pi/4) R_1^z(pi/4) R_2^y(-pi/4)``; ``W^dag sigma^x_1 W = alpha^x``."""
    return zz_entangler(np.pi / 4) @ rotation(1, "z", np.pi / 4) @ rotation(2, "y", -np.pi / 4)


@dataclass(frozen=True)
class IdentityResidual:
    raw: float
    phase_aligned: float
    phase: float


def verify_streaming_identity(phi: float, cutoff: int) -> IdentityResidual:
    """Compare ``exp[phi alpha^x (a - a^dag)]`` with its gate-sequence form.

    The right-hand side conjugates ``exp[phi sigma^x_1 (a - a^dag)]`` by
    ``W = U_C R_1^z R_2^y``.  Both sides are built densely on spin (x) mode.
    Returns the raw max-entry distance and the distance after removing the
    best global phase.
    """
    if cutoff < 16:
        raise ValidationError("cutoff must be at least 16")
    mode = ModeAlgebra(cutoff)
    minus_gen = mode.a - mode.adag
    lhs = sla.expm(phi * np.kron(alpha("x"), minus_gen))
    w = np.kron(streaming_conjugator(), np.eye(cutoff))
    inner = sla.expm(phi * np.kron(pauli(1, "x"), minus_gen))
    rhs = w.conj().T @ inner @ w
    raw = float(np.max(np.abs(lhs - rhs)))
    ov = np.vdot(lhs, rhs)
    phase = float(np.angle(ov)) if abs(ov) > 0 else 0.0
    aligned = float(np.max(np.abs(lhs - np.exp(-1j * phase) * rhs)))
    return IdentityResidual(raw, aligned, phase)
