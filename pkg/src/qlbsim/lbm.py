"""D2Q4 lattice Boltzmann solver for advection-diffusion.

Velocities are numbered counterclockwise from +x.  The collision relaxes
four orthonormal moments (density, x and y fluxes, and the
``c_x^2 - c_s^2`` ghost moment) at rates ``omega_1..omega_4`` with
``omega_1 = 0`` so that mass is conserved.  Arrays are laid out as
``f[i, x, y]`` on a periodic ``nx x ny`` grid in lattice units.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InstabilityError, ValidationError

VELOCITIES = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]])
WEIGHTS = np.full(4, 0.25)
CS2 = 0.5

MOMENT_VECTORS = np.array(
    [
        [1.0, 1.0, 1.0, 1.0],
        VELOCITIES[:, 0],
        VELOCITIES[:, 1],
        VELOCITIES[:, 0] ** 2 - CS2,
    ]
)


def relaxation_rate(diffusivity: float) -> float:
    """Rate giving ``D = c_s^2 (1/omega - 1/2)``."""
    return 1.0 / (0.5 + diffusivity / CS2)


def diffusivity_from_rate(omega: float) -> float:
    return CS2 * (1.0 / omega - 0.5)


@dataclass(frozen=True)
class ConstantFlow:
    ux: float = 0.0
    uy: float = 0.0

    def field(self, nx, ny):
        return np.full((nx, ny), float(self.ux)), np.full((nx, ny), float(self.uy))


@dataclass(frozen=True)
class CouetteFlow:
    """Shear flow ``U_x(y)``, ``U_y = 0``.

    ``centered=True`` uses ``U_x = u0 (y - ny/2) / (ny/2)`` so the profile
    is dimensionless and vanishes mid-domain; otherwise ``U_x = u0 * y``.
    """

    u0: float
    centered: bool = True

    def profile(self, ny):
        y = np.arange(ny, dtype=float)
        if self.centered:
            return self.u0 * (y - ny / 2) / (ny / 2)
        return self.u0 * y

    def field(self, nx, ny):
        ux = np.broadcast_to(self.profile(ny)[None, :], (nx, ny)).copy()
        return ux, np.zeros((nx, ny))


@dataclass(frozen=True)
class TransportModel:
    """Advection-diffusion parameters.

    ``omega2`` / ``omega3`` default to the isotropic rate for
    ``diffusivity``; set them separately for anisotropic diffusion.
    """

    diffusivity: float
    flow: ConstantFlow | CouetteFlow = field(default_factory=ConstantFlow)
    omega2: float | None = None
    omega3: float | None = None
    omega4: float = 1.0

    def __post_init__(self):
        if not self.diffusivity > 0:
            raise ValidationError(f"diffusivity must be positive, got {self.diffusivity}")
        for name in ("omega2", "omega3", "omega4"):
            w = getattr(self, name)
            if w is not None and not 0 < w < 2:
                raise ValidationError(f"{name}={w} outside the stable range (0, 2)")

    @property
    def rates(self) -> np.ndarray:
        w = relaxation_rate(self.diffusivity)
        return np.array(
            [
                0.0,
                w if self.omega2 is None else self.omega2,
                w if self.omega3 is None else self.omega3,
                self.omega4,
            ]
        )

    @property
    def weights(self):
        return WEIGHTS

    @property
    def velocities(self):
        return VELOCITIES

    @property
    def cs2(self):
        return CS2


@dataclass(frozen=True)
class ScatteringMatrix:
    a: np.ndarray
    eigenvectors: np.ndarray
    rates: np.ndarray


def equilibrium(rho, u, model: TransportModel | None = None):
    """``f_i^eq = w_i rho (1 + U.c_i / c_s^2)``; broadcasts over grids.

    Returns an array with a leading axis of length 4.
    """
    rho = np.asarray(rho, dtype=float)
    ux, uy = (np.asarray(c, dtype=float) for c in u)
    cu = (VELOCITIES[:, 0].reshape((4,) + (1,) * rho.ndim) * ux
          + VELOCITIES[:, 1].reshape((4,) + (1,) * rho.ndim) * uy)
    return WEIGHTS.reshape((4,) + (1,) * rho.ndim) * rho * (1.0 + cu / CS2)


def scattering_matrix(model: TransportModel) -> ScatteringMatrix:
    basis = MOMENT_VECTORS / np.linalg.norm(MOMENT_VECTORS, axis=1, keepdims=True)
    rates = model.rates
    a = basis.T @ np.diag(rates) @ basis
    a = 0.5 * (a + a.T)
    return ScatteringMatrix(a=a, eigenvectors=basis, rates=rates)


def omega_matrix(model: TransportModel, u=(0.0, 0.0)) -> np.ndarray:
    """Linear map ``f -> -A (f - f^eq(f))`` at a fixed velocity ``u``.

    ``f^eq`` depends on ``f`` only through ``rho = sum f``, so the map is
    ``-A + A E`` with ``E_kj = w_k (1 + u_k)``.
    """
    a = scattering_matrix(model).a
    uk = VELOCITIES @ np.asarray(u, dtype=float) / CS2
    e = np.outer(WEIGHTS * (1.0 + uk), np.ones(4))
    return -a + a @ e


@dataclass
class LatticeField:
    f: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        if self.f.ndim != 3 or self.f.shape[0] != 4:
            raise ValidationError(f"field must have shape (4, nx, ny), got {self.f.shape}")

    @property
    def nx(self):
        return self.f.shape[1]

    @property
    def ny(self):
        return self.f.shape[2]

    @property
    def rho(self):
        return self.f.sum(axis=0)

    @property
    def mass(self) -> float:
        return float(self.f.sum())

    def copy(self):
        return LatticeField(self.f.copy())


def stream(f: np.ndarray) -> np.ndarray:
    out = np.empty_like(f)
    for i, (cx, cy) in enumerate(VELOCITIES):
        out[i] = np.roll(f[i], shift=(cx, cy), axis=(0, 1))
    return out


def step(field: LatticeField, model: TransportModel, *, a=None, u=None) -> LatticeField:
    """Stream one site along each velocity, then relax toward local equilibrium."""
    if a is None:
        a = scattering_matrix(model).a
    if u is None:
        u = model.flow.field(field.nx, field.ny)
    f = stream(field.f)
    feq = equilibrium(f.sum(axis=0), u)
    f -= np.einsum("ij,jxy->ixy", a, f - feq)
    return LatticeField(f)


def gaussian_field(nx, ny, x0, y0, sigma, model: TransportModel, amplitude=1.0) -> LatticeField:
    """Equilibrium populations for a periodic Gaussian density bump."""
    x = np.arange(nx, dtype=float)
    y = np.arange(ny, dtype=float)
    dx = (x - x0 + nx / 2) % nx - nx / 2
    dy = (y - y0 + ny / 2) % ny - ny / 2
    rho = amplitude * np.exp(-(dx[:, None] ** 2 + dy[None, :] ** 2) / (2 * sigma ** 2))
    return LatticeField(equilibrium(rho, model.flow.field(nx, ny)))


def _fundamental(profile):
    n = profile.size
    k = 2 * np.pi / n
    z = np.sum(profile * np.exp(-1j * k * np.arange(n)))
    return z, k


def periodic_moments(rho: np.ndarray):
    """Mass, mean and variance along x and y from the fundamental Fourier mode.

    On a periodic grid a spreading pulse overlaps its own images, so raw
    moments are biased.  For a Gaussian the fundamental mode carries
    ``exp(-i k mu - k^2 var / 2)`` exactly, which is what is inverted here.
    Means are returned in ``[0, n)``.
    """
    mass = float(rho.sum())
    out = [mass]
    means, variances = [], []
    for axis in (1, 0):
        profile = rho.sum(axis=axis)
        z, k = _fundamental(profile)
        mu = (-np.angle(z) / k) % profile.size
        ratio = abs(z) / mass
        var = -2.0 * np.log(ratio) / k ** 2 if ratio > 0 else np.inf
        means.append(float(mu))
        variances.append(float(var))
    out.extend(means)
    out.extend(variances)
    return tuple(out)


def row_means_x(rho: np.ndarray) -> np.ndarray:
    """Periodic mean x position of each row ``y`` (Fourier-phase estimate)."""
    nx = rho.shape[0]
    k = 2 * np.pi / nx
    z = np.exp(-1j * k * np.arange(nx)) @ rho
    return (-np.angle(z) / k) % nx


def _unwrap(prev, new, n):
    return prev + ((new - prev + n / 2) % n - n / 2)


@dataclass
class Trajectory:
    """Moment diagnostics sampled along a run; arrays share one index."""

    step: np.ndarray
    mass: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray
    var_x: np.ndarray
    var_y: np.ndarray
    final: LatticeField = None

    COLUMNS = ("step", "mass", "mean_x", "mean_y", "var_x", "var_y")

    def rows(self):
        return list(zip(*(getattr(self, c) for c in self.COLUMNS)))

    def fit(self, column, start=0, stop=None):
        """Least-squares slope and intercept of ``column`` against step."""
        s = self.step
        sel = (s >= start) & (s <= (np.inf if stop is None else stop))
        slope, intercept = np.polyfit(s[sel], getattr(self, column)[sel], 1)
        return float(slope), float(intercept)


def run(field: LatticeField, model: TransportModel, n_steps: int, sample_every: int = 1,
        *, blowup: float = 1e6, callback=None) -> Trajectory:
    """Iterate :func:`step`, sampling moments every ``sample_every`` steps.

    Mean positions are unwrapped across samples, so they keep increasing
    when the pulse crosses the periodic boundary (the pulse must not move
    more than half the domain between samples).
    """
    if n_steps < 0 or sample_every < 1:
        raise ValidationError("n_steps must be >= 0 and sample_every >= 1")
    a = scattering_matrix(model).a
    u = model.flow.field(field.nx, field.ny)
    rows = []
    prev = None

    def sample(n, fld):
        nonlocal prev
        mass, mx, my, vx, vy = periodic_moments(fld.rho)
        if prev is not None:
            mx = _unwrap(prev[0], mx, fld.nx)
            my = _unwrap(prev[1], my, fld.ny)
        prev = (mx, my)
        rows.append((n, mass, mx, my, vx, vy))

    cur = field.copy()
    sample(0, cur)
    for n in range(1, n_steps + 1):
        cur = step(cur, model, a=a, u=u)
        if not np.all(np.isfinite(cur.f)) or np.max(np.abs(cur.f)) > blowup:
            raise InstabilityError(
                f"lattice run unstable at step {n}: max |f| = {np.max(np.abs(cur.f)):.3e}"
            )
        if callback is not None:
            callback(n, cur)
        if n % sample_every == 0:
            sample(n, cur)
    arr = np.array(rows, dtype=float)
    return Trajectory(arr[:, 0].astype(int), *arr[:, 1:].T, final=cur)


SCENARIO_KEYS = {"nx", "ny", "D", "velocity", "init", "steps", "sample_every",
                 "omega2", "omega3", "omega4"}


def _require(d, keys, where):
    extra = set(d) - set(keys)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def _num(d, key, where, lo=None, hi=None, default=None, integer=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"missing key {key!r} in {where}")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{where}.{key} must be an integer, got {v!r}")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(f"{where}.{key}={v} outside [{lo}, {hi}]")
    return int(v) if integer else float(v)


@dataclass
class Scenario:
    nx: int
    ny: int
    model: TransportModel
    init: dict
    steps: int
    sample_every: int

    def initial_field(self) -> LatticeField:
        i = self.init
        return gaussian_field(self.nx, self.ny, i["x0"], i["y0"], i["sigma"], self.model)


def parse_scenario(cfg: dict) -> Scenario:
    """Validate a scenario dictionary (see README for the schema)."""
    if not isinstance(cfg, dict):
        raise ConfigError("scenario must be a JSON object")
    _require(cfg, SCENARIO_KEYS, "scenario")
    nx = _num(cfg, "nx", "scenario", lo=4, integer=True)
    ny = _num(cfg, "ny", "scenario", lo=4, integer=True)
    d = _num(cfg, "D", "scenario", lo=1e-6, hi=10.0)
    vel = cfg.get("velocity", {"type": "constant"})
    if not isinstance(vel, dict):
        raise ConfigError("velocity must be an object")
    _require(vel, {"type", "ux", "uy", "u0", "centered"}, "velocity")
    kind = vel.get("type", "constant")
    if kind == "constant":
        flow = ConstantFlow(_num(vel, "ux", "velocity", -0.5, 0.5, 0.0),
                            _num(vel, "uy", "velocity", -0.5, 0.5, 0.0))
    elif kind == "couette":
        flow = CouetteFlow(_num(vel, "u0", "velocity", -0.5, 0.5), bool(vel.get("centered", True)))
    else:
        raise ConfigError(f"unknown velocity type {kind!r}")
    init = cfg.get("init")
    if not isinstance(init, dict):
        raise ConfigError("missing init object")
    _require(init, {"type", "x0", "y0", "sigma"}, "init")
    if init.get("type", "gaussian") != "gaussian":
        raise ConfigError(f"unknown init type {init.get('type')!r}")
    init = {"x0": _num(init, "x0", "init", 0, nx), "y0": _num(init, "y0", "init", 0, ny),
            "sigma": _num(init, "sigma", "init", 0.5, max(nx, ny))}
    try:
        model = TransportModel(
            d, flow,
            omega2=_num(cfg, "omega2", "scenario", 0, 2) if "omega2" in cfg else None,
            omega3=_num(cfg, "omega3", "scenario", 0, 2) if "omega3" in cfg else None,
            omega4=_num(cfg, "omega4", "scenario", 0, 2, default=1.0),
        )
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    return Scenario(nx, ny, model, init,
                    _num(cfg, "steps", "scenario", lo=0, integer=True),
                    _num(cfg, "sample_every", "scenario", lo=1, integer=True, default=1))
