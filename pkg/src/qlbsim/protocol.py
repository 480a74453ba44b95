"""Heralded collision plus spin-conditioned streaming: one quantum LB step.

The collision ``C = U_alpha + gamma U_beta`` is applied with one ancilla:
prepare ``(|0> + sqrt(gamma)|1>) / sqrt(1 + gamma)``, apply ``U_alpha``
on the ``|0>`` branch and ``U_beta`` on ``|1>``, undo the preparation and
keep the ``|0>`` outcome.  The kept branch is ``C psi / (1 + gamma)``.
Renormalising it is what the ledger compensates for.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import lbm
from .collision import (
    CollisionOperator,
    GeneratorMatrix,
    SplitSchedule,
    UnitarySumDecomposition,
    build_collision_general,
    gamma_window,
    split_schedule,
    window_bounds,
)
from .errors import ConfigError, HeraldError, InfeasibleGammaError, ValidationError
from .bosonic import VACUUM_WIDTH, ModeAlgebra
from .hybrid import (
    COMPONENT_MOMENT_COLUMNS,
    DEFAULT_CUTOFF,
    HybridState,
    Wavepacket,
    component_moments,
    encode_state,
    extract_field,
    streaming_sandwich,
)

MIN_HERALD_PROBABILITY = 1e-12


@dataclass(frozen=True)
class HeraldEntry:
    step: int
    substep: int
    probability: float
    outcome: str


@dataclass
class HeraldRecord:
    """Per-substep herald outcomes; ``cumulative_success`` multiplies them."""

    per_substep: list = field(default_factory=list)
    cumulative_success: float = 1.0
    ledger_factor: float = 1.0

    def append(self, entry: HeraldEntry, ledger_factor: float = 1.0):
        self.per_substep.append(entry)
        self.cumulative_success *= entry.probability
        self.ledger_factor *= ledger_factor

    @property
    def halted(self) -> bool:
        return any(e.outcome == "failure" for e in self.per_substep)

    def rows(self):
        cum = 1.0
        for e in self.per_substep:
            cum *= e.probability
            yield e.step, e.substep, e.probability, e.outcome, cum


def _ancilla_rotation(gamma):
    c = 1.0 / np.sqrt(1.0 + gamma)
    s = np.sqrt(gamma) * c
    return np.array([[c, -s], [s, c]])


def _act(u, amps, cutoff):
    """Apply ``u`` to the spin axis (dim 4) or to spin (x) mode-y (dim 4N)."""
    d = u.shape[0]
    lead = amps.shape[:-3]
    if d == 4:
        return np.einsum("st,...tnm->...snm", u, amps)
    if d == 4 * cutoff:
        t = np.swapaxes(amps, -1, -2)  # (..., 4, ny, nx)
        flat = t.reshape(lead + (4 * cutoff, cutoff))
        out = np.einsum("ij,...jn->...in", u, flat).reshape(lead + (4, cutoff, cutoff))
        return np.swapaxes(out, -1, -2)
    raise ValidationError(f"operator of dimension {d} does not act on spin or spin (x) mode")


def lcu_apply(state: HybridState, dec: UnitarySumDecomposition, mode: str = "postselect",
              rng: np.random.Generator | None = None):
    """Run the two-branch ancilla circuit for ``dec`` on ``state``.

    Returns ``(new_state, probability, outcome, ledger_factor)``.  In
    ``"postselect"`` mode the success branch is always kept.  In
    ``"sample"`` mode the ancilla is measured with ``rng``; on failure the
    returned state is the (renormalised) failure branch.
    """
    g = dec.gamma
    v = _ancilla_rotation(g)
    n = state.cutoff
    psi = state.amplitudes
    reg = np.stack([v[0, 0] * psi, v[1, 0] * psi])
    reg = np.stack([_act(dec.u_alpha, reg[0], n), _act(dec.u_beta, reg[1], n)])
    reg = np.einsum("ab,b...->a...", v.T, reg)
    p = float(np.vdot(reg[0], reg[0]).real)
    if p < MIN_HERALD_PROBABILITY:
        raise HeraldError(f"herald probability {p:.3e} is degenerate")
    if mode == "postselect":
        outcome = "postselected"
    elif mode == "sample":
        if rng is None:
            raise ValidationError("sample mode needs a random generator")
        outcome = "success" if rng.random() < p else "failure"
    else:
        raise ValidationError(f"unknown herald mode {mode!r}")
    out = state.copy()
    if outcome == "failure":
        out.amplitudes = reg[1] / np.sqrt(max(1.0 - p, MIN_HERALD_PROBABILITY))
        return out, p, outcome, 1.0
    factor = np.sqrt(p) * (1.0 + g)
    out.amplitudes = reg[0] / np.sqrt(p)
    out.ledger = state.ledger * factor
    return out, p, outcome, factor


def apply_collision_matrix(c, state: HybridState) -> HybridState:
    """Apply a dense collision matrix directly (no ancilla, no renormalisation)."""
    out = state.copy()
    out.amplitudes = _act(np.asarray(c), state.amplitudes, state.cutoff)
    return out


def herald_probability(state: HybridState, dec: UnitarySumDecomposition) -> float:
    """Closed form ``||C psi||^2 / (1 + gamma)^2`` without the ancilla."""
    cpsi = _act(dec.reconstruct(), state.amplitudes, state.cutoff)
    return float(np.vdot(cpsi, cpsi).real) / (1.0 + dec.gamma) ** 2


def full_step(state: HybridState, schedule: SplitSchedule, stream_theta: float, *,
              mode: str = "postselect", rng=None, record: HeraldRecord | None = None,
              step_index: int = 0):
    """Heralded collision substeps, then the x sandwich, then the y sandwich.

    Returns ``(state, record)``.  A failed herald in sample mode stops the
    step before streaming.
    """
    record = HeraldRecord() if record is None else record
    for k, st in enumerate(schedule.per_step):
        state, p, outcome, factor = lcu_apply(state, st.decomposition, mode, rng)
        record.append(HeraldEntry(step_index, k, p, outcome), factor)
        if outcome == "failure":
            return state, record
    for b in ("x", "y"):
        state = streaming_sandwich(b, stream_theta, state.cutoff).apply(state)
    return state, record


@dataclass(frozen=True)
class CouetteGenerator:
    """Scattering generator on spin (x) Fock_y for shear flow ``U_x ~ u0 X_y``.

    ``omega0 = damping + mass_term`` is the constant part; ``omega1`` is
    the coefficient of ``(u0 / c_s^2)(a_y + a_y^dag)``.
    """

    damping: np.ndarray
    mass_term: np.ndarray
    advection: np.ndarray
    u0: float
    cutoff: int
    assembled: np.ndarray = field(repr=False)

    @property
    def omega0(self):
        return self.damping + self.mass_term

    @property
    def omega1(self):
        return self.advection


def assemble_couette(u0: float, diffusivity: float, cutoff: int, omega4: float = 1.0) -> CouetteGenerator:
    model = lbm.TransportModel(diffusivity, omega4=omega4)
    a = lbm.scattering_matrix(model).a
    w = lbm.WEIGHTS
    ones = np.ones(4)
    damping = -a
    mass_term = a @ np.outer(w, ones)
    advection = a @ np.outer(w * lbm.VELOCITIES[:, 0], ones)
    quad = ModeAlgebra(cutoff)
    xy = quad.a + quad.adag
    assembled = np.kron(damping + mass_term, np.eye(cutoff)) + (u0 / lbm.CS2) * np.kron(advection, xy)
    return CouetteGenerator(damping, mass_term, advection, float(u0), int(cutoff), assembled)


def max_feasible_dt(m, dt_hi: float, iters: int = 60) -> float:
    """Largest ``dt <= dt_hi`` with a non-empty window (bisection)."""
    def ok(t):
        lam = np.linalg.eigvals(m)
        return gamma_window(np.exp(lam * t)) is not None
    lo, hi = 0.0, float(dt_hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def build_couette_generator(u0: float, diffusivity: float, cutoff: int, dt: float,
                            omega4: float = 1.0):
    """Couette generator and its collision ``exp(Omega dt)`` on spin (x) Fock_y."""
    gen = assemble_couette(u0, diffusivity, cutoff, omega4)
    coll = build_collision_general(gen.assembled, dt)
    if gamma_window(coll.spectrum) is None:
        lo, hi = window_bounds(coll.spectrum)
        raise InfeasibleGammaError(
            f"Couette collision at dt={dt} has empty window [{lo:.6g}, {hi:.6g}]; "
            f"largest feasible dt is about {max_feasible_dt(gen.assembled, dt):.6g}",
            window=(lo, hi),
        )
    return gen, coll


# -- configuration and driver ------------------------------------------------

PROTOCOL_KEYS = {"cutoff", "dt", "n_substeps", "n_steps", "theta", "collision", "init",
                 "herald_mode", "seed", "sample_every", "grid", "method"}


@dataclass
class ProtocolConfig:
    cutoff: int
    dt: float
    n_substeps: int
    n_steps: int
    theta: float
    collision: dict
    eta: np.ndarray
    packets: list
    herald_mode: str = "postselect"
    seed: int | None = None
    sample_every: int = 1
    grid: dict | None = None
    method: str = "auto"
    raw: dict = field(default_factory=dict, repr=False)

    def generator(self):
        """Generator matrix (4x4 or 4N x 4N) and a short description."""
        c = self.collision
        if c["type"] == "matrix":
            return GeneratorMatrix(c["m"]).m
        return assemble_couette(c["u0"], c["D"], self.cutoff, c.get("omega4", 1.0)).assembled


def _num(d, key, where, lo=None, hi=None, default=None, integer=False):
    return lbm._num(d, key, where, lo, hi, default, integer)


def _packet(d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    lbm._require(d, {"center", "sigma"}, where)
    center = d.get("center", [0.0, 0.0])
    if not (isinstance(center, list) and len(center) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in center)):
        raise ConfigError(f"{where}.center must be a pair of numbers")
    return Wavepacket(tuple(float(v) for v in center),
                      _num(d, "sigma", where, 0.5, 50.0, default=VACUUM_WIDTH))


def parse_protocol(cfg: dict) -> ProtocolConfig:
    if not isinstance(cfg, dict):
        raise ConfigError("protocol config must be a JSON object")
    lbm._require(cfg, PROTOCOL_KEYS, "protocol")
    cutoff = _num(cfg, "cutoff", "protocol", 4, 256, default=DEFAULT_CUTOFF, integer=True)
    col = cfg.get("collision")
    if not isinstance(col, dict) or "type" not in col:
        raise ConfigError("collision must be an object with a type")
    if col["type"] == "matrix":
        lbm._require(col, {"type", "m"}, "collision")
        try:
            m = GeneratorMatrix(np.array(col.get("m"), dtype=float))
        except (ValidationError, ValueError, TypeError) as exc:
            raise ConfigError(f"collision.m: {exc}") from exc
        if m.dim != 4:
            raise ConfigError("collision.m must be 4x4")
        collision = {"type": "matrix", "m": m.m.tolist()}
    elif col["type"] == "couette":
        lbm._require(col, {"type", "u0", "D", "omega4"}, "collision")
        collision = {"type": "couette", "u0": _num(col, "u0", "collision", -0.5, 0.5),
                     "D": _num(col, "D", "collision", 1e-6, 10.0),
                     "omega4": _num(col, "omega4", "collision", 0, 2, default=1.0)}
    else:
        raise ConfigError(f"unknown collision type {col['type']!r}")
    init = cfg.get("init", {})
    if not isinstance(init, dict):
        raise ConfigError("init must be an object")
    lbm._require(init, {"eta", "packet", "packets"}, "init")
    eta = np.array(init.get("eta", [1.0, 1.0, 1.0, 1.0]), dtype=float)
    if eta.shape != (4,) or not np.any(eta):
        raise ConfigError("init.eta must be four numbers, not all zero")
    if "packets" in init:
        if not isinstance(init["packets"], list) or len(init["packets"]) != 4:
            raise ConfigError("init.packets must list four wavepackets")
        packets = [_packet(p, f"init.packets[{i}]") for i, p in enumerate(init["packets"])]
    else:
        packets = [_packet(init.get("packet", {}), "init.packet")] * 4
    mode = cfg.get("herald_mode", "postselect")
    if mode not in ("postselect", "sample"):
        raise ConfigError(f"herald_mode must be postselect or sample, got {mode!r}")
    seed = cfg.get("seed")
    if mode == "sample" and seed is None:
        raise ConfigError("sample mode needs a seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        raise ConfigError("seed must be a nonnegative integer")
    method = cfg.get("method", "auto")
    if method not in ("auto", "eigen", "singular"):
        raise ConfigError(f"unknown method {method!r}")
    grid = cfg.get("grid")
    if grid is not None:
        if not isinstance(grid, dict):
            raise ConfigError("grid must be an object")
        lbm._require(grid, {"min", "max", "points"}, "grid")
        grid = {"min": _num(grid, "min", "grid"), "max": _num(grid, "max", "grid"),
                "points": _num(grid, "points", "grid", 2, 2001, integer=True)}
    return ProtocolConfig(
        cutoff=cutoff,
        dt=_num(cfg, "dt", "protocol", 0.0, 100.0),
        n_substeps=_num(cfg, "n_substeps", "protocol", 1, 10000, default=1, integer=True),
        n_steps=_num(cfg, "n_steps", "protocol", 0, 100000, integer=True),
        theta=_num(cfg, "theta", "protocol", -5.0, 5.0, default=0.0),
        collision=collision, eta=eta, packets=packets, herald_mode=mode, seed=seed,
        sample_every=_num(cfg, "sample_every", "protocol", 1, integer=True, default=1),
        grid=grid, method=method, raw=cfg,
    )


def make_schedule(config: ProtocolConfig) -> SplitSchedule:
    m = config.generator()
    method = config.method
    if method == "auto":
        # non-normal generators need the SVD split to keep both factors unitary
        method = "eigen" if np.allclose(m, m.T, atol=1e-12, rtol=0) else "singular"
    return split_schedule(m, config.dt, config.n_substeps, method=method)


@dataclass
class ProtocolResult:
    record: HeraldRecord
    moments: list
    fields: list
    final: HybridState
    halted: bool

    MOMENT_COLUMNS = ("step", "component") + COMPONENT_MOMENT_COLUMNS + ("ledger",)


def run_protocol(config) -> ProtocolResult:
    """Encode, iterate :func:`full_step`, and sample moments (and fields)."""
    if isinstance(config, dict):
        config = parse_protocol(config)
    state = encode_state(config.eta, config.packets, config.cutoff)
    schedule = make_schedule(config)
    rng = np.random.default_rng(config.seed) if config.herald_mode == "sample" else None
    record = HeraldRecord()
    moments, fields = [], []

    def sample(n, st):
        for s, row in enumerate(component_moments(st)):
            moments.append((n, s, *row, st.ledger))
        if config.grid is not None:
            fields.append((n, extract_field(st, config.grid)))

    sample(0, state)
    halted = False
    for n in range(1, config.n_steps + 1):
        state, record = full_step(state, schedule, config.theta, mode=config.herald_mode,
                                  rng=rng, record=record, step_index=n)
        if record.halted:
            halted = True
            break
        if n % config.sample_every == 0:
            sample(n, state)
    return ProtocolResult(record, moments, fields, state, halted)


def write_herald_csv(record: HeraldRecord, fh, header: str | None = None):
    if header:
        fh.write(header)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["step", "substep", "p", "outcome", "cumulative"])
    for step, sub, p, outcome, cum in record.rows():
        w.writerow([step, sub, repr(float(p)), outcome, repr(float(cum))])


def write_moments_csv(result: ProtocolResult, fh, header: str | None = None):
    if header:
        fh.write(header)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(ProtocolResult.MOMENT_COLUMNS)
    for row in result.moments:
        w.writerow([row[0], row[1]] + [repr(float(v)) for v in row[2:]])


def config_header(cfg: dict) -> str:
    return "# config: " + json.dumps(cfg, sort_keys=True) + "\n"
