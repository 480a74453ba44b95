"""Figure-data tables, decomposition reports and quantum/classical comparison.

Everything here returns plain Python data so the CLI only has to handle
files and exit codes.
"""
from __future__ import annotations

import csv
import io
import json

import numpy as np
import scipy.linalg as sla

from . import lbm
from .collision import (
    GeneratorMatrix,
    build_collision,
    decompose,
    failure_bound,
    gamma_window,
    optimal_gamma,
    success_curve,
    window_bounds,
)
from .errors import ConfigError, InfeasibleGammaError
from .hybrid import (
    HybridState,
    component_moments,
    conditional_displacement,
    spin_sector,
    streaming_sandwich,
    uniform_background,
)
from .protocol import ProtocolConfig, apply_collision_matrix, full_step, make_schedule, run_protocol
from .spin import BETA, alpha

TOLERANCES = {
    "collision_equivalence": 1e-6,
    "mass_mode": 1e-8,
    "streaming_displacement": 1e-6,
}


def _c(z):
    return [float(np.real(z)), float(np.imag(z))]


def complex_matrix_json(u):
    return [[_c(z) for z in row] for row in np.asarray(u)]


def decomposition_report(m, dt: float, gamma="auto") -> dict:
    """Decompose ``exp(m dt)`` and collect everything the JSON output needs.

    Raises :class:`InfeasibleGammaError` (with ``window`` set) when no
    feasible weight exists or the requested one is outside the window.
    """
    gen = m if isinstance(m, GeneratorMatrix) else GeneratorMatrix(m)
    coll = build_collision(gen, dt)
    bounds = window_bounds(coll.spectrum)
    window = gamma_window(coll.spectrum)
    if gamma == "auto":
        if window is None:
            raise InfeasibleGammaError(
                f"empty window [{bounds[0]:.9g}, {bounds[1]:.9g}]", window=bounds
            )
        g = optimal_gamma(window)
    else:
        g = float(gamma)
    dec = decompose(coll, g)
    res = dec.residuals()
    return {
        "dt": float(dt),
        "gamma": g,
        "window": list(bounds),
        "spectrum": [float(d) for d in np.real(coll.spectrum)],
        "p_fail": failure_bound(dec),
        "residual": res["reconstruction"],
        "unitarity": max(res["unitarity_alpha"], res["unitarity_beta"]),
        "commutator": res["commutator"],
        "u_alpha": complex_matrix_json(dec.u_alpha),
        "u_beta": complex_matrix_json(dec.u_beta),
    }


# -- success-probability tables (fig2) ------------------------------------------------------------------

FIG2_COLUMNS = ("table", "instance", "N", "gamma_ratio", "p_step", "p_accumulated")
FIG2_SPECTRAL_RADIUS = 0.5


def random_generator(rng: np.random.Generator, dim: int = 4,
                     radius: float = FIG2_SPECTRAL_RADIUS) -> GeneratorMatrix:
    """Symmetrised standard-Gaussian matrix scaled to the given spectral radius.

    A radius of 1/2 keeps ``exp(m)`` feasible for every draw: the window at
    ``dt = 1`` needs ``e^{lam_max} - 1 <= 1 + e^{lam_min}``.
    """
    g = rng.standard_normal((dim, dim))
    m = 0.5 * (g + g.T)
    m *= radius / np.max(np.abs(np.linalg.eigvalsh(m)))
    return GeneratorMatrix(0.5 * (m + m.T))


def fig2_rows(seed: int, dim: int = 4, n_max: int = 10, instances: int = 5,
              ratios=None, dt: float = 1.0):
    """Rows for both panels plus the scalar ``c = 1/2`` sanity table."""
    rng = np.random.default_rng(seed)
    if ratios is None:
        ratios = np.linspace(1.0, 2.0, 11)
    rows = []
    curves = []
    for k in range(instances):
        gen = random_generator(rng, dim)
        curve = success_curve(gen, dt, n_max, ratios=ratios)
        curves.append(curve)
        for n, p, acc in curve.by_n:
            rows.append(("fig2a", str(k), int(n), 1.0, p, acc))
        for r, p in curve.by_gamma:
            rows.append(("fig2b", str(k), curve.n_sweep, r, p, p ** curve.n_sweep))
    scalar = GeneratorMatrix(np.diag([np.log(0.5), np.log(0.5)]))
    curve = success_curve(scalar, 1.0, n_max, ratios=ratios)
    for n, p, acc in curve.by_n:
        rows.append(("scalar", "c=0.5", int(n), 1.0, p, acc))
    return rows, curves


# -- spectrum and window tables (fig3) ------------------------------------------------------------------

FIG3_COLUMNS = ("dt", "delta_1", "delta_2", "delta_3", "delta_4", "gamma_lower", "gamma_upper")


def fig3_row(dt: float, diffusivity: float = 0.05, omega4: float = 1.0):
    model = lbm.TransportModel(diffusivity, omega4=omega4)
    m = -lbm.scattering_matrix(model).a
    coll = build_collision(GeneratorMatrix(m), dt)
    lo, hi = window_bounds(coll.spectrum)
    return (float(dt), *map(float, np.real(coll.spectrum)), lo, hi)


def fig3_rows(diffusivity: float = 0.05, dt_max: float = 4.0, samples: int = 200):
    return [fig3_row(t, diffusivity) for t in np.linspace(0.0, dt_max, samples)]


# -- CSV helpers ---------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(columns, rows, config: dict | None = None) -> str:
    buf = io.StringIO()
    if config is not None:
        buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


# -- quantum versus classical ------------------------------------------------------

def _classical_generator(scenario: lbm.Scenario):
    flow = scenario.model.flow
    u = (flow.ux, flow.uy) if isinstance(flow, lbm.ConstantFlow) else (0.0, 0.0)
    return lbm.omega_matrix(scenario.model, u)


def check_compatible(scenario: lbm.Scenario, qcfg: ProtocolConfig):
    """Refuse to compare runs that do not describe the same collision physics."""
    col = qcfg.collision
    model = scenario.model
    if col["type"] == "couette":
        if abs(col["D"] - model.diffusivity) > 1e-12:
            raise ConfigError(f"diffusivity mismatch: lb D={model.diffusivity}, qsim D={col['D']}")
        if abs(col.get("omega4", 1.0) - model.omega4) > 1e-12:
            raise ConfigError("omega4 mismatch between lb and qsim configs")
        lb_u0 = model.flow.u0 if isinstance(model.flow, lbm.CouetteFlow) else 0.0
        if abs(lb_u0 - col["u0"]) > 1e-12:
            raise ConfigError(f"shear mismatch: lb u0={lb_u0}, qsim u0={col['u0']}")
        return
    m = np.array(col["m"])
    ref = _classical_generator(scenario)
    if np.max(np.abs(m - ref)) > 1e-9:
        raise ConfigError(
            "qsim collision matrix differs from the lb model generator "
            f"(max difference {np.max(np.abs(m - ref)):.3e}); different D or velocity?"
        )


def collision_equivalence(qcfg: ProtocolConfig, m4: np.ndarray):
    """Run the heralded collision on a uniform background; compare to expm.

    Streaming is switched off.  Returns ``(max error, mass drift)``.
    """
    f0 = qcfg.eta
    state = uniform_background(f0, qcfg.cutoff)
    sched_cfg = ProtocolConfig(**{**qcfg.__dict__, "herald_mode": "postselect", "theta": 0.0})
    schedule = make_schedule(sched_cfg)
    for n in range(1, qcfg.n_steps + 1):
        state, _ = full_step(state, schedule, 0.0, step_index=n)
    got = spin_sector(state)
    if qcfg.collision["type"] == "couette":
        # uniform vacuum background is not an eigenstate of the shear term;
        # compare against the exact operator on spin (x) Fock_y instead
        big = sla.expm(qcfg.generator() * qcfg.dt * qcfg.n_steps)
        ref = spin_sector(apply_collision_matrix(big, uniform_background(f0, qcfg.cutoff)))
    else:
        ref = sla.expm(m4 * qcfg.dt * qcfg.n_steps) @ f0
    err = float(np.max(np.abs(got - ref)))
    mass = float(abs(np.sum(got).real - np.sum(f0)))
    return err, mass


def streaming_errors(theta: float, cutoff: int) -> dict:
    """Mean displacement error for each sandwich and for the bare ``D_b``.

    Spin is prepared in the +1 eigenstate of ``alpha^b`` (sandwich) or of
    ``beta`` (bare displacement); the bosonic mode starts in vacuum.  The
    expected shift is ``sqrt(2) theta`` along mode ``b``.
    """
    out = {}
    for b, axis in (("x", 2), ("y", 3)):
        for name, op, spin_op in (("sandwich", streaming_sandwich(b, theta, cutoff), alpha(b)),
                                  ("displacement", conditional_displacement(b, theta, BETA, cutoff), BETA)):
            w, v = np.linalg.eigh(spin_op)
            vec = v[:, np.argmax(w)]
            amps = np.zeros((4, cutoff, cutoff), dtype=complex)
            amps[:, 0, 0] = vec
            st = op.apply(HybridState(amps))
            mom = component_moments(st)
            wts = mom[:, 0]
            means = np.nan_to_num(mom[:, axis])
            shift = float(np.sum(wts * means) / np.sum(wts))
            out[f"{name}_{b}"] = abs(shift - np.sqrt(2.0) * theta)
    return out


def compare_report(scenario: lbm.Scenario, qcfg: ProtocolConfig) -> dict:
    check_compatible(scenario, qcfg)
    m4 = _classical_generator(scenario)
    err, mass = collision_equivalence(qcfg, m4)
    stream = streaming_errors(qcfg.theta, qcfg.cutoff)
    result = run_protocol(qcfg)
    probs = [e.probability for e in result.record.per_substep]
    report = {
        "collision_equivalence_error": err,
        "mass_mode_drift": mass,
        "streaming_displacement_errors": stream,
        "herald": {
            "substeps": len(probs),
            "min_p": float(min(probs)) if probs else 1.0,
            "mean_p": float(np.mean(probs)) if probs else 1.0,
            "cumulative_success": result.record.cumulative_success,
            "halted": result.halted,
        },
        "tolerances": dict(TOLERANCES),
    }
    violations = []
    if err > TOLERANCES["collision_equivalence"]:
        violations.append("collision_equivalence")
    if mass > TOLERANCES["mass_mode"]:
        violations.append("mass_mode")
    if max(stream.values()) > TOLERANCES["streaming_displacement"]:
        violations.append("streaming_displacement")
    report["violations"] = violations
    report["passed"] = not violations
    return report
