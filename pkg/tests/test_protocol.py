"""Hybrid state encoding, field extraction, heralded collision and full steps."""
import numpy as np
import pytest
import scipy.linalg as sla
from scipy.integrate import trapezoid

from qlbsim import hybrid, lbm, protocol
from qlbsim.bosonic import ModeAlgebra
from qlbsim.collision import (
    GeneratorMatrix,
    build_collision,
    decompose,
    failure_bound,
    gamma_window,
    optimal_gamma,
    split_schedule,
)
from qlbsim.errors import ConfigError, CutoffError, HeraldError, ValidationError
from qlbsim.hybrid import HybridState, Wavepacket, encode_state
from qlbsim.spin import BETA

from oracles import coherent_mean_x, poisson_probabilities, random_symmetric

D2Q4 = -lbm.scattering_matrix(lbm.TransportModel(0.05)).a


def random_state(rng, n):
    a = rng.standard_normal((4, n, n)) + 1j * rng.standard_normal((4, n, n))
    return HybridState(a / np.linalg.norm(a))


def random_decomposition(rng, dim=4):
    m = random_symmetric(rng, dim)
    m *= 0.5 / np.max(np.abs(np.linalg.eigvalsh(m)))
    c = build_collision(GeneratorMatrix(m), 1.0)
    return decompose(c, optimal_gamma(gamma_window(c.spectrum)))


# -- encoding and fields ------------------------------------------------------------

def test_vacuum_encoding():
    st = encode_state([1, 0, 0, 0], Wavepacket(), 8)
    assert st.amplitudes[0, 0, 0] == 1.0 and st.norm() == pytest.approx(1.0)
    assert st.ledger == 1.0


def test_coherent_encoding_is_poisson():
    a0 = 1.1
    st = encode_state([1, 0, 0, 0], Wavepacket((np.sqrt(2) * a0, 0.0)), 32)
    px = np.sum(np.abs(st.amplitudes[0]) ** 2, axis=1)
    np.testing.assert_allclose(px, poisson_probabilities(a0 ** 2, 32), atol=1e-12)


def test_encoding_ledger_and_physical_weights():
    eta = np.array([0.3, 0.25, 0.2, 0.25])
    st = encode_state(eta, Wavepacket((0.5, -0.3), 0.9), 32)
    assert st.ledger == pytest.approx(np.linalg.norm(eta))
    weights = hybrid.component_moments(st)[:, 0]
    np.testing.assert_allclose(weights, eta ** 2, rtol=1e-9)


def test_encoding_cutoff_error_reports_requirement():
    with pytest.raises(CutoffError) as info:
        encode_state([1, 1, 1, 1], Wavepacket((5.0, 0.0)), 8)
    need = info.value.required_cutoff
    assert need > 8
    encode_state([1, 1, 1, 1], Wavepacket((5.0, 0.0)), need)


def test_encoding_validation():
    with pytest.raises(ValidationError):
        encode_state([0, 0, 0, 0], Wavepacket(), 8)
    with pytest.raises(ValidationError):
        encode_state([1, 1, 1], Wavepacket(), 8)
    with pytest.raises(ValidationError):
        HybridState(np.zeros((3, 4, 4)))


def test_field_vacuum_peak_value():
    st = encode_state([1, 0, 0, 0], Wavepacket(), 8)
    fs = hybrid.extract_field(st, np.array([0.0]))
    # psi_0(0)^2 for the product of two modes
    assert fs.f[0, 0, 0] == pytest.approx(0.751126 ** 2, abs=1e-6)
    assert fs.imag_residue == 0.0


def test_field_quadrature_matches_weights():
    eta = np.array([0.4, 0.3, 0.2, 0.1])
    st = encode_state(eta, Wavepacket((0.5, 0.0), 1.0), 48)
    lim = hybrid.validity_limit(48)
    fs = hybrid.extract_field(st, (-lim + 0.01, lim - 0.01, 301))
    for i in range(4):
        w = trapezoid(trapezoid(fs.f[i] ** 2, fs.x2, axis=1), fs.x1)
        assert w == pytest.approx(eta[i] ** 2, abs=1e-4)


def test_field_reality():
    st = encode_state([0.4, 0.3, 0.2, 0.1], Wavepacket((0.5, -0.3), 0.9), 24)
    assert hybrid.extract_field(st, (-3, 3, 21)).imag_residue < 1e-12
    # alpha^x is real, so x streaming keeps the field real
    st = hybrid.streaming_sandwich("x", 0.3, 24).apply(st)
    assert hybrid.extract_field(st, (-3, 3, 21)).imag_residue < 1e-12
    # alpha^y carries sigma^y and mixes components with imaginary weights
    st = hybrid.streaming_sandwich("y", 0.3, 24).apply(st)
    assert hybrid.extract_field(st, (-3, 3, 21)).imag_residue > 1e-3


def test_displaced_vacuum_peak_moves():
    n = 32
    amps = np.zeros((4, n, n), dtype=complex)
    amps[0, 0, 0] = 1.0  # |00> is a +1 eigenstate of beta
    st = hybrid.conditional_displacement("x", 0.5, BETA, n).apply(HybridState(amps))
    x = np.linspace(-2, 3, 2001)
    fs = hybrid.extract_field(st, x)
    i0 = np.argmin(np.abs(x))
    peak = x[np.argmax(fs.f[0][:, i0])]
    assert peak == pytest.approx(coherent_mean_x(0.5), abs=3e-3)


def test_field_grid_beyond_validity_rejected():
    st = encode_state([1, 0, 0, 0], Wavepacket(), 8)
    with pytest.raises(ValidationError):
        hybrid.extract_field(st, (-10, 10, 5))


def test_spin_sector_recovers_eta():
    eta = np.array([0.3, 0.25, 0.2, 0.25])
    st = hybrid.uniform_background(eta, 16)
    np.testing.assert_allclose(hybrid.spin_sector(st).real, eta, atol=1e-15)


def test_state_csv_round_trip(tmp_path):
    import csv

    st = encode_state([1, 0.5, 0, 0], Wavepacket(), 4)
    path = tmp_path / "s.csv"
    with open(path, "w", newline="") as fh:
        hybrid.write_state_csv(st, fh)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    got = np.zeros((4, 4, 4), dtype=complex)
    for r in rows:
        got[int(r["component"]), int(r["n_x"]), int(r["n_y"])] = float(r["re"]) + 1j * float(r["im"])
    np.testing.assert_array_equal(got, st.amplitudes)


# -- heralded collision ---------------------------------------------------------

def test_lcu_trivial_decomposition():
    rng = np.random.default_rng(0)
    st = random_state(rng, 4)
    c = build_collision(GeneratorMatrix(np.log(2.0) * np.eye(4)), 1.0)
    dec = decompose(c, 1.0)  # U_alpha = U_beta = I, C = 2 I
    out, p, outcome, factor = protocol.lcu_apply(st, dec)
    assert p == pytest.approx(1.0, abs=1e-14) and outcome == "postselected"
    np.testing.assert_allclose(out.amplitudes, st.amplitudes, atol=1e-14)
    assert out.ledger == pytest.approx(2.0)


def test_lcu_scalar_probability():
    c = build_collision(GeneratorMatrix(np.log(0.5) * np.eye(4)), 1.0)
    dec = decompose(c, 0.5)
    rng = np.random.default_rng(1)
    for _ in range(5):
        _, p, _, _ = protocol.lcu_apply(random_state(rng, 3), dec)
        assert p == pytest.approx(0.111111, abs=1e-6)


def test_lcu_fidelity_and_probability_against_direct_application():
    rng = np.random.default_rng(2)
    for _ in range(20):
        dec = random_decomposition(rng)
        st = random_state(rng, 3)
        out, p, _, factor = protocol.lcu_apply(st, dec)
        cpsi = np.einsum("st,tnm->snm", dec.source, st.amplitudes)
        nrm = np.linalg.norm(cpsi)
        assert p == pytest.approx(nrm ** 2 / (1 + dec.gamma) ** 2, abs=1e-12)
        assert p == pytest.approx(protocol.herald_probability(st, dec), abs=1e-12)
        fid = abs(np.vdot(cpsi / nrm, out.amplitudes)) ** 2
        assert fid >= 1 - 1e-10
        # ledger-corrected output equals C psi exactly
        np.testing.assert_allclose(out.physical(), cpsi * st.ledger, atol=1e-12)
        assert p >= 1 - failure_bound(dec) - 1e-12


def test_lcu_failure_bound_tight_at_top_singular_vector():
    rng = np.random.default_rng(3)
    dec = random_decomposition(rng)
    _, _, vh = np.linalg.svd(dec.u_alpha - dec.u_beta)
    amps = np.zeros((4, 2, 2), dtype=complex)
    amps[:, 0, 0] = vh[0].conj()
    _, p, _, _ = protocol.lcu_apply(HybridState(amps), dec)
    assert p == pytest.approx(1 - failure_bound(dec), abs=1e-8)


def test_lcu_sample_mode_and_errors():
    rng = np.random.default_rng(4)
    dec = random_decomposition(rng)
    st = random_state(rng, 3)
    with pytest.raises(ValidationError):
        protocol.lcu_apply(st, dec, mode="sample")
    with pytest.raises(ValidationError):
        protocol.lcu_apply(st, dec, mode="maybe")
    outcomes = {protocol.lcu_apply(st, dec, "sample", np.random.default_rng(s))[2] for s in range(40)}
    assert outcomes == {"success", "failure"}
    # failure branch is normalised and leaves the ledger untouched
    for s in range(40):
        out, p, outcome, factor = protocol.lcu_apply(st, dec, "sample", np.random.default_rng(s))
        if outcome == "failure":
            assert out.norm() == pytest.approx(1.0) and factor == 1.0 and out.ledger == st.ledger
            break


def test_lcu_degenerate_probability_raises():
    amps = np.zeros((4, 2, 2), dtype=complex)
    amps[0, 0, 0] = 1.0
    st = HybridState(amps)
    # C kills the prepared state
    c = np.diag([1e-20, 1.0, 1.0, 1.0])
    from qlbsim.collision import decompose_singular

    dec = decompose_singular(c, 1.0)
    with pytest.raises(HeraldError):
        protocol.lcu_apply(st, dec)


def test_operator_on_spin_and_mode_y():
    n = 4
    rng = np.random.default_rng(5)
    u = sla.expm(1j * random_symmetric(rng, 4 * n))
    st = random_state(rng, n)
    got = protocol.apply_collision_matrix(u, st).amplitudes
    ref = np.zeros_like(got)
    big = u.reshape(4, n, 4, n)
    for x in range(n):
        ref[:, x, :] = np.einsum("iajb,jb->ia", big, st.amplitudes[:, x, :])
    assert np.max(np.abs(got - ref)) < 1e-12
    with pytest.raises(ValidationError):
        protocol.apply_collision_matrix(np.eye(5), st)


# -- full steps -------------------------------------------------------------------

def test_identity_collision_zero_theta_leaves_state():
    st = encode_state([0.3, 0.25, 0.2, 0.25], Wavepacket((0.4, -0.2)), 16)
    sched = split_schedule(GeneratorMatrix(np.zeros((4, 4))), 1.0, 1)
    out, rec = protocol.full_step(st, sched, 0.0)
    np.testing.assert_allclose(out.amplitudes, st.amplitudes, atol=1e-14)
    assert rec.cumulative_success == pytest.approx(1.0)


def test_collision_only_matches_matrix_exponential():
    f0 = np.array([0.4, 0.2, 0.3, 0.1])
    st = hybrid.uniform_background(f0, 8)
    sched = split_schedule(GeneratorMatrix(D2Q4), 0.6, 3)
    for n in range(1, 6):
        st, _ = protocol.full_step(st, sched, 0.0, step_index=n)
    ref = sla.expm(D2Q4 * 0.6 * 5) @ f0
    np.testing.assert_allclose(hybrid.spin_sector(st).real, ref, atol=1e-8)


def test_streaming_only_component_shifts():
    n = 32
    theta = 0.3
    for b, axis in (("x", 2), ("y", 3)):
        st = encode_state([1, 1, 1, 1], Wavepacket(), n)
        st = hybrid.streaming_sandwich(b, theta, n).apply(st)
        # in the alpha^b eigenbasis each half moves by +-sqrt(2) theta
        w, v = np.linalg.eigh(__import__("qlbsim").spin.alpha(b))
        amps = np.einsum("sk,snm->knm", v.conj(), st.amplitudes)
        mom = hybrid.component_moments(HybridState(amps))
        for k in range(4):
            if mom[k, 0] > 1e-12:
                assert mom[k, axis] == pytest.approx(np.sign(w[k]) * np.sqrt(2) * theta, abs=1e-8)


def test_herald_record_bookkeeping():
    cfg = {"cutoff": 8, "dt": 0.6, "n_substeps": 2, "n_steps": 4, "theta": 0.1,
           "collision": {"type": "matrix", "m": D2Q4.tolist()}}
    res = protocol.run_protocol(cfg)
    probs = [e.probability for e in res.record.per_substep]
    assert len(probs) == 8
    assert res.record.cumulative_success == pytest.approx(np.prod(probs), rel=1e-12)
    assert [r[4] for r in res.record.rows()][-1] == pytest.approx(np.prod(probs), rel=1e-12)


def test_zero_dynamics_moments_constant():
    cfg = {"cutoff": 16, "dt": 1.0, "n_steps": 10, "theta": 0.0,
           "collision": {"type": "matrix", "m": np.zeros((4, 4)).tolist()},
           "init": {"eta": [0.3, 0.25, 0.2, 0.25], "packet": {"center": [0.5, -0.5], "sigma": 1.0}}}
    res = protocol.run_protocol(cfg)
    rows = np.array([r[2:] for r in res.moments])
    np.testing.assert_allclose(rows, np.tile(rows[:4], (rows.shape[0] // 4, 1)), atol=1e-10)


def test_sample_mode_reproducible_and_halts():
    cfg = {"cutoff": 8, "dt": 2.0, "n_steps": 50, "theta": 0.1, "herald_mode": "sample", "seed": 7,
           "collision": {"type": "matrix", "m": D2Q4.tolist()}}
    a = protocol.run_protocol(cfg)
    b = protocol.run_protocol(cfg)
    assert [e.outcome for e in a.record.per_substep] == [e.outcome for e in b.record.per_substep]
    assert a.halted and a.record.per_substep[-1].outcome == "failure"
    np.testing.assert_array_equal(a.final.amplitudes, b.final.amplitudes)


def test_parse_protocol_errors():
    base = {"dt": 0.5, "n_steps": 1, "collision": {"type": "matrix", "m": D2Q4.tolist()}}
    protocol.parse_protocol(base)
    bad = [
        {**base, "extra": 1},
        {**base, "collision": {"type": "matrix", "m": [[0, 1], [0, 0]]}},
        {**base, "collision": {"type": "matrix", "m": np.eye(3).tolist()}},
        {**base, "collision": {"type": "weird"}},
        {**base, "herald_mode": "sample"},
        {**base, "herald_mode": "sample", "seed": -1},
        {**base, "init": {"eta": [0, 0, 0, 0]}},
        {**base, "init": {"packets": [{}]}},
        {**base, "method": "qr"},
        {**base, "grid": {"min": -1, "max": 1}},
        {**base, "cutoff": 2},
    ]
    for cfg in bad:
        with pytest.raises(ConfigError):
            protocol.parse_protocol(cfg)


# -- Couette generator --------------------------------------------------------------

def test_couette_zero_shear_spectrum():
    n, dt = 6, 0.7
    cg = protocol.assemble_couette(0.0, 0.05, n)
    ev = np.sort(np.linalg.eigvals(cg.assembled * dt).real)
    rates = np.sort(lbm.TransportModel(0.05).rates)
    np.testing.assert_allclose(ev, np.sort(np.repeat(-rates * dt, n)), atol=1e-12)


def test_couette_mass_row_and_structure():
    n = 6
    cg = protocol.assemble_couette(0.01, 0.05, n)
    mass = np.kron(np.ones(4), np.eye(n))
    np.testing.assert_allclose(mass @ np.kron(cg.damping, np.eye(n)), 0, atol=1e-15)
    x = ModeAlgebra(n)
    a = lbm.scattering_matrix(lbm.TransportModel(0.05)).a
    shear = np.kron(a @ np.outer(lbm.WEIGHTS * lbm.VELOCITIES[:, 0], np.ones(4)), x.a + x.adag)
    const = np.kron(cg.omega0, np.eye(n))
    np.testing.assert_allclose(cg.assembled - const, 0.01 / lbm.CS2 * shear, atol=1e-15)


def test_couette_decomposition_reconstructs():
    gen, coll = protocol.build_couette_generator(0.01, 0.05, 16, 0.5)
    sched = split_schedule(gen.assembled, 0.5, 1, method="singular")
    dec = sched.per_step[0].decomposition
    r = dec.residuals()
    assert r["reconstruction"] < 1e-8
    assert max(r["unitarity_alpha"], r["unitarity_beta"]) < 1e-10
    np.testing.assert_allclose(dec.source, sla.expm(gen.assembled * 0.5), atol=1e-12)
    np.testing.assert_allclose(coll.entries, dec.source, atol=1e-12)
