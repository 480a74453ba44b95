"""Two-unitary decomposition of non-unitary collision operators.

A collision operator ``C = exp(M dt)`` (``M`` real symmetric, so ``C`` is
positive definite) is written as ``C = U_alpha + gamma * U_beta`` with
``U_alpha``, ``U_beta`` unitary and commuting.  The split is done per
eigenvalue: each ``delta_i`` is the sum of a unit-modulus ``alpha_i`` and a
vector of length ``gamma`` with unit-modulus direction ``beta_i``.  That
only works when ``|1 - gamma| <= |delta_i| <= 1 + gamma`` for every ``i``,
which defines the feasible window for ``gamma``.

The heralded circuit that applies the sum succeeds with probability
``||C psi||^2 / (1 + gamma)^2``.  Its worst case over input states is
``1 - failure_bound(dec)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    DiagonalizabilityError,
    InfeasibleGammaError,
    SpectralDomainError,
    ValidationError,
)

SYMMETRY_TOL = 1e-12
RADICAND_CLAMP = 1e-14
EPS = np.finfo(float).eps
MAX_EIGENBASIS_CONDITION = 1e8


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GeneratorMatrix:
    """Real symmetric rate matrix ``M`` with ``C = exp(M dt)``."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m)
        if np.iscomplexobj(m):
            if np.max(np.abs(m.imag), initial=0.0) > SYMMETRY_TOL:
                raise ValidationError("generator must be real")
            m = m.real
        m = np.asarray(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"generator must be square, got shape {m.shape}")
        if m.shape[0] < 2:
            raise ValidationError("generator dimension must be at least 2")
        if not np.all(np.isfinite(m)):
            raise ValidationError("generator has non-finite entries")
        asym = np.max(np.abs(m - m.T))
        if asym > SYMMETRY_TOL:
            raise ValidationError(f"generator is not symmetric (max |m - m^T| = {asym:.3e})")
        object.__setattr__(self, "m", _frozen(m))

    @property
    def dim(self) -> int:
        return self.m.shape[0]


@dataclass(frozen=True)
class CollisionOperator:
    """Dense collision matrix together with its eigendecomposition.

    ``eigenbasis`` holds eigenvectors as columns.  ``eigenbasis_inv`` is
    its inverse; for normal operators the basis is unitary and the inverse
    is the conjugate transpose.
    """

    entries: np.ndarray
    spectrum: np.ndarray
    eigenbasis: np.ndarray
    dt: float
    eigenbasis_inv: np.ndarray = field(default=None, repr=False)
    normal: bool = True

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen(self.entries))
        object.__setattr__(self, "spectrum", _frozen(self.spectrum))
        object.__setattr__(self, "eigenbasis", _frozen(self.eigenbasis))
        inv = self.eigenbasis_inv
        if inv is None:
            inv = self.eigenbasis.conj().T
        object.__setattr__(self, "eigenbasis_inv", _frozen(inv))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def is_real_spectrum(self) -> bool:
        return bool(np.all(np.abs(np.imag(self.spectrum)) <= 1e-12))

    def eigen_residual(self) -> float:
        """Spectral norm of ``C V - V diag(delta)``."""
        r = self.entries @ self.eigenbasis - self.eigenbasis * self.spectrum[None, :]
        return float(np.linalg.norm(r, 2))

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.eigenbasis))


@dataclass(frozen=True)
class GammaWindow:
    """Closed interval of feasible weights, ``lower <= gamma <= upper``."""

    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValidationError(
                f"empty gamma window [{self.lower}, {self.upper}]; use gamma_window()"
            )

    def __contains__(self, gamma) -> bool:
        return self.lower <= gamma <= self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class UnitarySumDecomposition:
    """``C = u_alpha + gamma * u_beta`` with per-eigenvalue phases."""

    u_alpha: np.ndarray
    u_beta: np.ndarray
    gamma: float
    alphas: np.ndarray
    betas: np.ndarray
    source: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("u_alpha", "u_beta", "alphas", "betas"):
            object.__setattr__(self, name, _frozen(getattr(self, name), complex))
        if self.source is not None:
            object.__setattr__(self, "source", _frozen(self.source))

    @property
    def dim(self) -> int:
        return self.u_alpha.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.u_alpha + self.gamma * self.u_beta

    def residuals(self) -> dict:
        """Unitarity, reconstruction, commutator and phase-modulus residuals."""
        eye = np.eye(self.dim)
        out = {
            "unitarity_alpha": float(np.linalg.norm(self.u_alpha.conj().T @ self.u_alpha - eye, 2)),
            "unitarity_beta": float(np.linalg.norm(self.u_beta.conj().T @ self.u_beta - eye, 2)),
            "commutator": float(
                np.linalg.norm(self.u_alpha @ self.u_beta - self.u_beta @ self.u_alpha, 2)
            ),
            "modulus": float(
                max(np.max(np.abs(np.abs(self.alphas) - 1)), np.max(np.abs(np.abs(self.betas) - 1)))
            ),
        }
        if self.source is not None:
            out["reconstruction"] = float(np.max(np.abs(self.reconstruct() - self.source)))
        return out


def _order(values):
    values = np.asarray(values)
    return np.lexsort((np.imag(values), np.real(values)))


def build_collision(gen: GeneratorMatrix, dt: float) -> CollisionOperator:
    """``C = exp(m dt)`` through the symmetric eigendecomposition of ``m``."""
    if not isinstance(gen, GeneratorMatrix):
        gen = GeneratorMatrix(gen)
    dt = float(dt)
    if not np.isfinite(dt) or dt < 0:
        raise ValidationError(f"dt must be a nonnegative real, got {dt}")
    lam, v = np.linalg.eigh(gen.m)
    delta = np.exp(lam * dt)
    idx = np.argsort(delta, kind="stable")
    delta, v = delta[idx], v[:, idx]
    c = (v * delta) @ v.T
    c = 0.5 * (c + c.T)
    return CollisionOperator(entries=c, spectrum=delta, eigenbasis=v, dt=dt, normal=True)


def collision_from_matrix(c, dt: float = float("nan"), *, normal_tol: float = 1e-10) -> CollisionOperator:
    """Wrap an arbitrary square matrix as a :class:`CollisionOperator`.

    Normal matrices get a unitary eigenbasis from the complex Schur form.
    Anything else goes through ``eig`` and must have an eigenbasis with
    condition number below ``MAX_EIGENBASIS_CONDITION``.
    """
    c = np.asarray(c)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValidationError(f"collision matrix must be square, got shape {c.shape}")
    scale = max(np.linalg.norm(c, 2), 1.0)
    t, z = sla.schur(c.astype(complex), output="complex")
    off = np.linalg.norm(np.triu(t, 1))
    if off <= normal_tol * scale:
        delta = np.diag(t).copy()
        idx = _order(delta)
        return CollisionOperator(
            entries=c, spectrum=delta[idx], eigenbasis=z[:, idx], dt=dt, normal=True
        )
    delta, v = np.linalg.eig(c)
    idx = _order(delta)
    delta, v = delta[idx], v[:, idx]
    cond = np.linalg.cond(v)
    if not np.isfinite(cond) or cond >= MAX_EIGENBASIS_CONDITION:
        raise DiagonalizabilityError(
            f"eigenbasis condition number {cond:.3e} exceeds {MAX_EIGENBASIS_CONDITION:.0e}"
        )
    return CollisionOperator(
        entries=c, spectrum=delta, eigenbasis=v, dt=dt,
        eigenbasis_inv=np.linalg.inv(v), normal=False,
    )


def build_collision_general(m, dt: float) -> CollisionOperator:
    """``C = expm(m dt)`` for a generator that need not be symmetric."""
    m = np.asarray(m)
    dt = float(dt)
    if dt < 0:
        raise ValidationError(f"dt must be nonnegative, got {dt}")
    c = sla.expm(m * dt)
    if not np.iscomplexobj(m):
        c = c.real
    return collision_from_matrix(c, dt)


def _moduli(spectrum):
    spectrum = np.asarray(spectrum)
    if np.iscomplexobj(spectrum):
        realish = np.abs(spectrum.imag) <= 1e-12 * np.maximum(1.0, np.abs(spectrum))
        bad = realish & (spectrum.real <= 0)
        mod = np.abs(spectrum)
    else:
        bad = spectrum <= 0
        mod = spectrum.astype(float)
    if np.any(bad) or np.any(mod <= 0) or not np.all(np.isfinite(mod)):
        i = int(np.flatnonzero(bad | (mod <= 0) | ~np.isfinite(mod))[0])
        raise SpectralDomainError(
            f"eigenvalue {i} = {spectrum[i]} is not positive; no unit-modulus split exists"
        )
    return mod


def window_bounds(spectrum) -> tuple[float, float]:
    """Raw ``(max_i |1 - |delta_i||, min_i (1 + |delta_i|))``; may be empty."""
    mod = _moduli(spectrum)
    return float(np.max(np.abs(mod - 1.0))), float(np.min(1.0 + mod))


def gamma_window(spectrum) -> GammaWindow | None:
    """Feasible weights for the whole spectrum, or ``None`` if there are none."""
    lower, upper = window_bounds(spectrum)
    if lower > upper:
        return None
    return GammaWindow(lower, upper)


def optimal_gamma(window: GammaWindow | None) -> float:
    """Smallest feasible weight; it maximises the worst-case success."""
    if window is None:
        raise InfeasibleGammaError("gamma window is empty")
    return window.lower


def _radicand_factors(r, gamma):
    """Linear factors of ``(r^2 - (1 - g)^2)((1 + g)^2 - r^2)`` and their scales.

    Keeping the factors apart avoids cancellation near the window edges and
    underflow for tiny ``gamma``.
    """
    d = r - 1.0
    s = max(abs(d), gamma)
    return ((d + gamma, s), (r + 1.0 - gamma, max(r + 1.0, gamma)),
            (gamma - d, s), (r + 1.0 + gamma, r + 1.0 + gamma))


def _root(r, gamma):
    """``sqrt`` of the radicand; factors at rounding level count as zero."""
    root = 1.0
    for f, scale in _radicand_factors(r, gamma):
        if f <= 4.0 * EPS * scale:
            if f < -RADICAND_CLAMP:
                return None
            return 0.0
        root *= np.sqrt(f)
    return root


def unit_pair(delta, gamma: float) -> tuple[complex, complex]:
    """Unit-modulus ``(alpha, beta)`` with ``alpha + gamma * beta = delta``.

    For positive real ``delta`` the branch with ``Im(alpha) >= 0`` is taken.
    Complex ``delta`` is handled in the frame rotated onto its argument, so
    the same branch is used continuously away from the real axis.
    """
    delta = complex(delta)
    r = abs(delta)
    if r == 0:
        raise SpectralDomainError("zero eigenvalue has no unit-modulus split")
    root = _root(r, gamma)
    if root is None:
        raise InfeasibleGammaError(
            f"negative radicand for eigenvalue {delta} at gamma={gamma}", eigenvalue=delta,
        )
    phase = delta / r
    a = complex((r * r - gamma * gamma + 1.0) / (2.0 * r), root / (2.0 * r))
    alpha = a * phase
    if gamma == 0:
        return alpha, complex(-1.0)
    re_b = (r - 1.0) * (r + 1.0) / (2.0 * r * gamma) + gamma / (2.0 * r)
    b = complex(re_b, -(root / gamma) / (2.0 * r))
    return alpha, b * phase


def _check_gamma(gamma):
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma < 0:
        raise ValidationError(f"gamma must be a nonnegative real, got {gamma}")
    return gamma


def decompose(c: CollisionOperator, gamma: float) -> UnitarySumDecomposition:
    """Split ``c`` into ``U_alpha + gamma U_beta`` eigenvalue by eigenvalue.

    Raises :class:`InfeasibleGammaError` naming the first eigenvalue whose
    radicand is negative.
    """
    gamma = _check_gamma(gamma)
    _moduli(c.spectrum)
    alphas = np.empty(c.dim, dtype=complex)
    betas = np.empty(c.dim, dtype=complex)
    for i, d in enumerate(c.spectrum):
        try:
            alphas[i], betas[i] = unit_pair(d, gamma)
        except InfeasibleGammaError as exc:
            bounds = window_bounds(c.spectrum)
            raise InfeasibleGammaError(
                f"gamma={gamma} outside window [{bounds[0]:.9g}, {bounds[1]:.9g}]: "
                f"negative radicand at eigenvalue {i} (delta={d})",
                index=i, eigenvalue=d, window=bounds,
            ) from exc
    v, vinv = c.eigenbasis, c.eigenbasis_inv
    u_a = (v * alphas) @ vinv
    u_b = (v * betas) @ vinv
    return UnitarySumDecomposition(
        u_alpha=u_a, u_beta=u_b, gamma=gamma, alphas=alphas, betas=betas, source=c.entries
    )


def singular_window(c) -> GammaWindow | None:
    """Feasible weights for :func:`decompose_singular`."""
    s = np.linalg.svd(np.asarray(c), compute_uv=False)
    if np.min(s) <= 0:
        raise SpectralDomainError("singular collision matrix has no unit-modulus split")
    lower, upper = float(np.max(np.abs(s - 1.0))), float(np.min(1.0 + s))
    return None if lower > upper else GammaWindow(lower, upper)


def decompose_singular(c, gamma: float) -> UnitarySumDecomposition:
    """Unitary split of a possibly non-normal matrix through its SVD.

    With ``C = W diag(s) Z^H`` each singular value is split like an
    eigenvalue and ``U = W diag(.) Z^H``.  Both factors are unitary for any
    ``C``; they commute only when ``C`` is normal.  For symmetric positive
    definite ``C`` this coincides with :func:`decompose`.
    """
    gamma = _check_gamma(gamma)
    entries = c.entries if isinstance(c, CollisionOperator) else np.asarray(c)
    w, s, zh = np.linalg.svd(entries)
    alphas = np.empty(s.size, dtype=complex)
    betas = np.empty(s.size, dtype=complex)
    for i, sv in enumerate(s):
        try:
            alphas[i], betas[i] = unit_pair(sv, gamma)
        except (InfeasibleGammaError, SpectralDomainError) as exc:
            raise InfeasibleGammaError(
                f"gamma={gamma} infeasible at singular value {i} (s={sv})",
                index=i, eigenvalue=sv,
            ) from exc
    return UnitarySumDecomposition(
        u_alpha=(w * alphas) @ zh, u_beta=(w * betas) @ zh, gamma=gamma,
        alphas=alphas, betas=betas, source=entries,
    )


def failure_bound(dec: UnitarySumDecomposition) -> float:
    """Worst-case failure ``gamma ||U_alpha - U_beta||_2^2 / (1 + gamma)^2``."""
    g = dec.gamma
    if g == 0:
        return 0.0
    nrm = np.linalg.norm(dec.u_alpha - dec.u_beta, 2)
    return float(min(max(g * nrm * nrm / (1.0 + g) ** 2, 0.0), 1.0))


@dataclass(frozen=True)
class SplitStep:
    decomposition: UnitarySumDecomposition
    gamma0: float
    p_success: float


@dataclass(frozen=True)
class SplitSchedule:
    """``N`` identical heralded substeps whose product is the full collision."""

    n_steps: int
    per_step: tuple
    accumulated_success: float
    substep: CollisionOperator = field(repr=False, default=None)
    window: GammaWindow | None = None

    def product(self) -> np.ndarray:
        out = np.eye(self.per_step[0].decomposition.dim, dtype=complex)
        for s in self.per_step:
            out = s.decomposition.reconstruct() @ out
        return out


def _substep_collision(gen, dt, n):
    if isinstance(gen, GeneratorMatrix):
        return build_collision(gen, dt / n)
    m = np.asarray(gen)
    if m.ndim == 2 and m.shape[0] == m.shape[1] and np.allclose(m, m.T, atol=SYMMETRY_TOL, rtol=0) \
            and not np.iscomplexobj(m):
        return build_collision(GeneratorMatrix(m), dt / n)
    return build_collision_general(m, dt / n)


def split_schedule(gen, dt: float, n: int, *, gamma_ratio: float = 1.0,
                   method: str = "eigen") -> SplitSchedule:
    """Heralded schedule for ``exp(m dt)`` as ``n`` substeps of ``exp(m dt / n)``.

    Each substep runs at ``gamma_ratio * gamma0`` where ``gamma0`` is the
    optimal weight of the substep.  ``method="singular"`` uses the SVD split,
    which keeps the factors unitary for non-normal collisions.
    """
    n = int(n)
    if n < 1:
        raise ValidationError(f"number of substeps must be positive, got {n}")
    sub = _substep_collision(gen, float(dt), n)
    if method == "eigen":
        window = gamma_window(sub.spectrum)
        split = decompose
    elif method == "singular":
        window = singular_window(sub.entries)
        split = decompose_singular
    else:
        raise ValidationError(f"unknown decomposition method {method!r}")
    if window is None:
        lo, hi = window_bounds(sub.spectrum) if method == "eigen" else (np.nan, np.nan)
        raise InfeasibleGammaError(
            f"substep window is empty at dt/n = {dt / n:g} (lower {lo:.6g} > upper {hi:.6g})",
            window=(lo, hi),
        )
    g0 = optimal_gamma(window)
    dec = split(sub, g0 * gamma_ratio)
    p = 1.0 - failure_bound(dec)
    step = SplitStep(dec, g0, p)
    return SplitSchedule(
        n_steps=n, per_step=(step,) * n, accumulated_success=p ** n, substep=sub, window=window,
    )


@dataclass(frozen=True)
class SuccessCurve:
    """Per-step and accumulated success versus ``N``, and versus ``gamma / gamma0``.

    ``by_n`` rows are ``(N, p_step, p_accumulated)``; ``by_gamma`` rows are
    ``(gamma_ratio, p_step)`` at ``N = n_sweep``.
    """

    by_n: np.ndarray
    by_gamma: np.ndarray
    n_sweep: int

    def accumulated_variation(self) -> float:
        acc = self.by_n[:, 2]
        return float((acc.max() - acc.min()) / acc.max())


def success_curve(gen, dt: float, n_max: int, *, n_sweep: int = 10,
                  ratios=None) -> SuccessCurve:
    if ratios is None:
        ratios = np.linspace(1.0, 2.0, 21)
    rows = []
    for n in range(1, int(n_max) + 1):
        sch = split_schedule(gen, dt, n)
        rows.append((n, sch.per_step[0].p_success, sch.accumulated_success))
    sweep = []
    base = split_schedule(gen, dt, n_sweep)
    for r in ratios:
        g = r * base.per_step[0].gamma0
        if g > base.window.upper:
            continue
        sweep.append((float(r), split_schedule(gen, dt, n_sweep, gamma_ratio=r).per_step[0].p_success))
    return SuccessCurve(np.array(rows, dtype=float), np.array(sweep, dtype=float).reshape(-1, 2), n_sweep)
