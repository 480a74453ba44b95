"""Dense statevector for two pseudospins coupled to two truncated bosonic modes.

Amplitudes are stored as ``psi[s, n_x, n_y]`` with ``s`` the two-qubit
index ``|q1 q2>`` and ``n_x``, ``n_y`` Fock levels.  The physical
distribution of component ``s`` is ``ledger * psi[s]`` read in the
position representation of both modes.

Operators that act on spin (x) one mode are kept in factored form
(``sum_k P_k (x) D_k``) so nothing of size ``(4 N^2)^2`` is ever built.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .bosonic import (
    VACUUM_WIDTH,
    ModeAlgebra,
    displacement,
    gaussian_amplitudes,
    hermite_functions,
    hermite_integrals,
    required_cutoff,
)
from .errors import CutoffError, ValidationError
from .spin import BETA, s_gate

DEFAULT_CUTOFF = 32
LEAK_TOL = 1e-6
COMPONENT_LABELS = ("00", "01", "10", "11")
MODES = ("x", "y")


class CutoffWarning(UserWarning):
    """Norm is reaching the top of the truncated Fock space."""


def _mode(b):
    if b not in MODES:
        raise ValidationError(f"bosonic mode must be 'x' or 'y', got {b!r}")
    return b


@dataclass
class HybridState:
    """Normalised amplitudes plus the normalisation carried outside them.

    ``velocity_labels`` records which lattice direction each spin component
    stands for; it is bookkeeping only and never enters the dynamics.
    """

    amplitudes: np.ndarray
    ledger: float = 1.0
    eta: np.ndarray | None = None
    velocity_labels: tuple = COMPONENT_LABELS

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        a = self.amplitudes
        if a.ndim != 3 or a.shape[0] != 4 or a.shape[1] != a.shape[2]:
            raise ValidationError(f"amplitudes must have shape (4, N, N), got {a.shape}")

    @property
    def cutoff(self) -> int:
        return self.amplitudes.shape[1]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "HybridState":
        return HybridState(self.amplitudes.copy(), self.ledger,
                           None if self.eta is None else self.eta.copy(), self.velocity_labels)

    def physical(self) -> np.ndarray:
        return self.ledger * self.amplitudes

    def top_level_weight(self, levels: int = 2) -> float:
        """Probability in Fock levels ``>= N - levels`` of either mode."""
        p = np.abs(self.amplitudes) ** 2
        n = self.cutoff
        mask = np.zeros((n, n), dtype=bool)
        mask[n - levels:, :] = True
        mask[:, n - levels:] = True
        return float(p[:, mask].sum())


@dataclass(frozen=True)
class SpinModeOperator:
    """``sum_k spin_k (x) mode_k`` acting on spin and one bosonic mode."""

    mode: str
    branches: tuple

    @property
    def cutoff(self) -> int:
        return self.branches[0][1].shape[0]

    def dense(self) -> np.ndarray:
        """Matrix on ``spin (x) mode`` (dimension ``4 N``)."""
        return sum(np.kron(s, m) for s, m in self.branches)

    def apply_array(self, amps: np.ndarray) -> np.ndarray:
        out = np.zeros_like(amps, dtype=complex)
        for s, m in self.branches:
            if self.mode == "x":
                out += np.einsum("st,kn,...tnm->...skm", s, m, amps, optimize=True)
            else:
                out += np.einsum("st,km,...tnm->...snk", s, m, amps, optimize=True)
        return out

    def apply(self, state: HybridState, *, check_leak: bool = True) -> HybridState:
        out = state.copy()
        out.amplitudes = self.apply_array(state.amplitudes)
        if check_leak:
            leak = out.top_level_weight()
            if leak > LEAK_TOL:
                warnings.warn(
                    f"{leak:.2e} of the norm sits in the top two Fock levels "
                    f"(cutoff {out.cutoff})", CutoffWarning, stacklevel=2,
                )
        return out

    def conjugated(self, u: np.ndarray) -> "SpinModeOperator":
        """``(u^dag (x) 1) self (u (x) 1)``."""
        ud = u.conj().T
        return SpinModeOperator(self.mode, tuple((ud @ s @ u, m) for s, m in self.branches))


def _signed_projectors(spin_op, tol=1e-10):
    spin_op = np.asarray(spin_op, dtype=complex)
    if spin_op.shape != (4, 4) or np.max(np.abs(spin_op - spin_op.conj().T)) > tol:
        raise ValidationError("spin operator must be a Hermitian 4x4 matrix")
    w, v = np.linalg.eigh(spin_op)
    if np.max(np.abs(np.abs(w) - 1.0)) > tol:
        raise ValidationError(f"spin operator spectrum must be +-1, got {w}")
    plus = v[:, w > 0]
    minus = v[:, w < 0]
    return plus @ plus.conj().T, minus @ minus.conj().T


def conditional_displacement(b: str, theta: float, spin_op, cutoff: int = DEFAULT_CUTOFF) -> SpinModeOperator:
    """``exp(theta spin_op (x) (a_b^dag - a_b))`` for a +-1-spectrum ``spin_op``.

    Each spin eigenspace gets the exact truncated displacement by ``+theta``
    or ``-theta``.
    """
    _mode(b)
    theta = float(theta)
    if abs(theta) * np.sqrt(2 * cutoff) > cutoff / 4:
        warnings.warn(
            f"displacement {theta} is large for cutoff {cutoff}", CutoffWarning, stacklevel=2
        )
    p_plus, p_minus = _signed_projectors(spin_op)
    branches = []
    if np.any(p_plus):
        branches.append((p_plus, displacement(theta, cutoff)))
    if np.any(p_minus):
        branches.append((p_minus, displacement(-theta, cutoff)))
    return SpinModeOperator(b, tuple(branches))


def streaming_sandwich(b: str, theta: float, cutoff: int = DEFAULT_CUTOFF) -> SpinModeOperator:
    """``S_b^{-1} D_b S_b`` with ``D_b`` the beta-conditioned displacement.

    Since ``S_b beta S_b = alpha^b`` this equals
    ``exp(theta alpha^b (x) (a_b^dag - a_b))``.
    """
    s = s_gate(b)
    return conditional_displacement(b, theta, BETA, cutoff).conjugated(s)


@dataclass(frozen=True)
class Wavepacket:
    """Real Gaussian wavefunction; ``sigma`` is the std of ``|psi|^2``."""

    center: tuple = (0.0, 0.0)
    sigma: float = VACUUM_WIDTH


def _mode_amplitudes(packet: Wavepacket, cutoff):
    cx, lx = gaussian_amplitudes(packet.center[0], packet.sigma, cutoff)
    cy, ly = gaussian_amplitudes(packet.center[1], packet.sigma, cutoff)
    leak = 1.0 - (1.0 - lx) * (1.0 - ly)
    if leak > LEAK_TOL:
        need = max(required_cutoff(packet.center[0], packet.sigma, LEAK_TOL / 2, cutoff),
                   required_cutoff(packet.center[1], packet.sigma, LEAK_TOL / 2, cutoff))
        raise CutoffError(
            f"wavepacket at {packet.center} (sigma {packet.sigma}) leaks {leak:.2e} "
            f"above cutoff {cutoff}; need a cutoff of about {need}",
            required_cutoff=need,
        )
    return np.outer(cx, cy)


def encode_state(eta, packets, cutoff: int = DEFAULT_CUTOFF, *,
                 velocity_labels=COMPONENT_LABELS) -> HybridState:
    """``sum_i eta_i |i> (x) |Psi_i>`` with Gaussian ``Psi_i``.

    ``packets`` is one :class:`Wavepacket` shared by all components or a
    sequence of four.  The state is normalised and ``ledger = ||eta||``,
    so ``ledger * amplitudes[i]`` is ``eta_i Psi_i``.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (4,):
        raise ValidationError("eta must have four entries")
    total = float(np.linalg.norm(eta))
    if total == 0:
        raise ValidationError("eta must not vanish")
    if isinstance(packets, Wavepacket):
        packets = [packets] * 4
    if len(packets) != 4:
        raise ValidationError("need one wavepacket per component")
    amps = np.zeros((4, cutoff, cutoff), dtype=complex)
    for i, p in enumerate(packets):
        if eta[i] != 0:
            amps[i] = eta[i] / total * _mode_amplitudes(p, cutoff)
    amps /= np.linalg.norm(amps)
    return HybridState(amps, ledger=total, eta=eta.copy(), velocity_labels=tuple(velocity_labels))


def uniform_background(spin_amplitudes, cutoff: int = DEFAULT_CUTOFF,
                       packet: Wavepacket = Wavepacket()) -> HybridState:
    """Every component carries the same mode wavefunction; spin part ``f``."""
    f = np.asarray(spin_amplitudes, dtype=float)
    return encode_state(f, packet, cutoff)


def spin_sector(state: HybridState, packet: Wavepacket = Wavepacket()) -> np.ndarray:
    """Ledger-corrected overlap of each component with a background mode state."""
    bg = _mode_amplitudes(packet, state.cutoff)
    return state.ledger * np.einsum("nm,snm->s", bg.conj(), state.amplitudes)


def validity_limit(cutoff: int) -> float:
    return np.sqrt(2.0 * cutoff) - 1.0


def _grid(grid):
    if isinstance(grid, dict):
        grid = (grid["min"], grid["max"], grid["points"])
    if isinstance(grid, tuple) and len(grid) == 3:
        return np.linspace(float(grid[0]), float(grid[1]), int(grid[2]))
    return np.asarray(grid, dtype=float)


@dataclass
class FieldSample:
    x1: np.ndarray
    x2: np.ndarray
    f: np.ndarray
    imag_residue: float


def extract_field(state: HybridState, grid) -> FieldSample:
    """Physical ``f_i(x1, x2) = ledger * <x1, x2 | psi_i>`` on a square grid.

    ``grid`` is ``(min, max, points)``, a dict with those keys, or explicit
    coordinates.  Points beyond ``sqrt(2 N) - 1`` are rejected because the
    truncated Hermite expansion is unreliable there.
    """
    x = _grid(grid)
    lim = validity_limit(state.cutoff)
    if np.max(np.abs(x)) > lim:
        raise ValidationError(
            f"grid reaches |x| = {np.max(np.abs(x)):.3g}, beyond {lim:.3g} for cutoff {state.cutoff}"
        )
    h = hermite_functions(state.cutoff, x)
    vals = state.ledger * np.einsum("na,snm,mb->sab", h, state.amplitudes, h, optimize=True)
    return FieldSample(x, x.copy(), vals.real.copy(), float(np.max(np.abs(vals.imag), initial=0.0)))


COMPONENT_MOMENT_COLUMNS = ("weight", "mass", "mean_x1", "mean_x2", "var_x1", "var_x2")


def component_moments(state: HybridState) -> np.ndarray:
    """Per-component ``(weight, mass, <x1>, <x2>, var x1, var x2)``.

    ``weight`` is ``ledger^2 ||psi_i||^2``; ``mass`` is the integral of the
    physical field; means and variances are quadrature expectations of the
    normalised component.
    """
    n = state.cutoff
    xq = ModeAlgebra(n).x
    ints = hermite_integrals(n)
    out = np.zeros((4, 6))
    for s in range(4):
        c = state.amplitudes[s]
        w = float(np.vdot(c, c).real)
        mass = state.ledger * float(np.real(ints @ c @ ints))
        if w <= 0:
            out[s] = (0.0, mass, np.nan, np.nan, np.nan, np.nan)
            continue
        x1 = np.vdot(c, xq @ c).real / w
        x2 = np.vdot(c, c @ xq.T).real / w
        x1sq = np.vdot(c, xq @ xq @ c).real / w
        x2sq = np.vdot(c, c @ (xq @ xq).T).real / w
        out[s] = (state.ledger ** 2 * w, mass, x1, x2, x1sq - x1 ** 2, x2sq - x2 ** 2)
    return out


def write_state_csv(state: HybridState, fh):
    """Rows ``component, n_x, n_y, re, im`` for every stored amplitude."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["component", "n_x", "n_y", "re", "im"])
    for s, nx, ny in np.ndindex(*state.amplitudes.shape):
        z = state.amplitudes[s, nx, ny]
        w.writerow([s, nx, ny, repr(float(z.real)), repr(float(z.imag))])


def write_field_csv(sample: FieldSample, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["component", "x1", "x2", "f"])
    for s in range(sample.f.shape[0]):
        for i, a in enumerate(sample.x1):
            for j, b in enumerate(sample.x2):
                w.writerow([s, repr(float(a)), repr(float(b)), repr(float(sample.f[s, i, j]))])
