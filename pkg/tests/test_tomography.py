import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from donor_memory import channels
from donor_memory.noise import NoiseConfig
from donor_memory.rng import stream
from donor_memory.spin_core import DensityMatrix4
from donor_memory.tomography import (
    BlochVector,
    TomographyPlan,
    bloch_from_tomography,
    density_from_bloch,
    linear_inversion_chi,
    memory_fidelity,
    mle_project,
    monte_carlo_errors,
    process_tomography,
    run_xy_tomography,
    sinusoid_fit,
    state_fidelity,
)

IDEAL_INPUTS = [density_from_bloch(b) for b in ((1, 0, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1))]
PHASES = np.arange(0, 360, 15.0)


def test_plan_validation():
    assert len(TomographyPlan().phases) == 24
    with pytest.raises(ValueError):
        TomographyPlan(phases=(0.0, 0.0, 10.0, 20.0))
    with pytest.raises(ValueError):
        TomographyPlan(phases=(10.0, 0.0, 20.0, 30.0))
    with pytest.raises(ValueError):
        TomographyPlan(phases=(0.0, 15.0, 30.0, 361.0))


def test_sinusoid_fit_exact_cosine():
    probs = 0.5 + 0.5 * np.cos(np.radians(PHASES))
    fit = sinusoid_fit(PHASES, probs)
    assert fit.amplitude == pytest.approx(0.5, abs=1e-12)
    assert fit.phase_deg == pytest.approx(0.0, abs=1e-9)
    assert fit.offset == pytest.approx(0.5, abs=1e-12)
    assert fit.phase_defined


def test_sinusoid_fit_flat_data_flagged():
    fit = sinusoid_fit(PHASES, np.full(PHASES.size, 0.5))
    assert fit.amplitude == pytest.approx(0.0, abs=1e-12)
    assert not fit.phase_defined
    assert fit.phase_deg is None


def test_sinusoid_fit_needs_four_points():
    with pytest.raises(ValueError):
        sinusoid_fit([0.0, 90.0, 180.0], [0.4, 0.5, 0.6])


def test_sinusoid_fit_synthetic_recovery_within_3_sigma():
    rng = np.random.default_rng(5)
    truth_amp, truth_phase, sigma = 0.4, 37.0, 0.01
    probs = 0.5 + truth_amp * np.cos(np.radians(PHASES - truth_phase))
    noisy = probs + rng.normal(0, sigma, PHASES.size)
    fit = sinusoid_fit(PHASES, noisy, np.full(PHASES.size, sigma))
    assert abs(fit.amplitude - truth_amp) < 3 * fit.amplitude_err
    assert abs(fit.phase_deg - truth_phase) < 3 * fit.phase_err_deg


@given(st.floats(min_value=0.0, max_value=359.0), st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_sinusoid_fit_phase_covariance(delta, seed):
    rng = np.random.default_rng(seed)
    amp = rng.uniform(0.1, 0.45)
    phase = rng.uniform(0, 360)
    probs = 0.5 + amp * np.cos(np.radians(PHASES - phase))
    shifted = 0.5 + amp * np.cos(np.radians(PHASES - phase - delta))
    f0 = sinusoid_fit(PHASES, probs)
    f1 = sinusoid_fit(PHASES, shifted)
    assert f1.amplitude == pytest.approx(f0.amplitude, abs=1e-9)
    diff = (f1.phase_deg - f0.phase_deg - delta) % 360.0
    assert min(diff, 360 - diff) < 1e-6


def test_bloch_from_tomography_examples():
    fit = sinusoid_fit(PHASES, 0.5 + 0.5 * np.cos(np.radians(PHASES)))
    b = bloch_from_tomography(fit, (0.5, 0.0), 1.0)
    assert (b.x, b.y, b.z) == pytest.approx((1.0, 0.0, 0.0), abs=1e-9)
    # amplitude 0.25, phase 90, visibility 0.5 -> y = 1
    fit2 = sinusoid_fit(PHASES, 0.5 + 0.25 * np.cos(np.radians(PHASES - 90.0)))
    b2 = bloch_from_tomography(fit2, (0.5, 0.0), 0.5)
    assert b2.y == pytest.approx(1.0, abs=1e-9)
    assert b2.x == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        bloch_from_tomography(fit, (0.5, 0.0), 0.0)


def test_density_from_bloch_examples():
    down = density_from_bloch((0, 0, -1))
    assert down[1, 1] == pytest.approx(1.0)
    assert np.allclose(density_from_bloch((0, 0, 0)), np.eye(2) / 2)
    proj = density_from_bloch((1.2, 0, 0))
    plus_x = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert np.allclose(proj, plus_x, atol=1e-12)


@given(st.tuples(*[st.floats(min_value=-2, max_value=2)] * 3))
@settings(max_examples=80, deadline=None)
def test_density_from_bloch_always_physical(b):
    rho = density_from_bloch(b)
    evals = np.linalg.eigvalsh(rho)
    assert evals.min() > -1e-12
    assert np.trace(rho).real == pytest.approx(1.0)


def test_state_fidelity_examples():
    psi = np.array([1, 1], dtype=complex) / math.sqrt(2)
    assert state_fidelity(np.outer(psi, psi.conj()), psi) == pytest.approx(1.0)
    assert state_fidelity(np.eye(2) / 2, psi) == pytest.approx(0.5)


def test_linear_inversion_identity_and_x_gate():
    chi = linear_inversion_chi(IDEAL_INPUTS, IDEAL_INPUTS)
    expected = np.zeros((4, 4), dtype=complex)
    expected[0, 0] = 1.0
    assert np.max(np.abs(chi - expected)) < 1e-9
    outs = [channels.SIGMA_X @ r @ channels.SIGMA_X for r in IDEAL_INPUTS]
    chi_x = linear_inversion_chi(IDEAL_INPUTS, outs)
    assert chi_x[1, 1].real == pytest.approx(1.0, abs=1e-9)


def test_linear_inversion_rejects_singular_inputs():
    bad = [IDEAL_INPUTS[0]] * 4
    with pytest.raises(ValueError):
        linear_inversion_chi(bad, bad)


def test_depolarizing_channel_matches_kraus_oracle():
    p = 0.2
    # independent oracle: chi assembled from the channel's Kraus operators
    kraus = [
        math.sqrt(1 - 0.75 * p) * channels.SIGMA_I,
        math.sqrt(p / 4) * channels.SIGMA_X,
        math.sqrt(p / 4) * channels.SIGMA_Y,
        math.sqrt(p / 4) * channels.SIGMA_Z,
    ]
    oracle = channels.chi_from_kraus(kraus)
    assert np.allclose(np.diag(oracle).real, [0.85, 0.05, 0.05, 0.05])
    outs = [channels.apply_chi(oracle, r) for r in IDEAL_INPUTS]
    chi = process_tomography(IDEAL_INPUTS, outs).chi
    assert np.max(np.abs(chi - oracle)) < 1e-6


def test_mle_leaves_physical_chi_unchanged():
    chi = linear_inversion_chi(IDEAL_INPUTS, IDEAL_INPUTS)
    pm = mle_project(chi, IDEAL_INPUTS, IDEAL_INPUTS)
    assert np.max(np.abs(pm.chi - chi)) < 1e-6
    assert pm.chi[0, 0].real == pytest.approx(1.0, abs=1e-8)
    assert channels.trace_preservation_residual(pm.chi) < 1e-6


def test_mle_projects_noisy_chi_onto_physical_set():
    rng = np.random.default_rng(7)
    blochs = [np.array(b) + rng.normal(0, 0.02, 3) for b in ((1, 0, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1))]
    outs = [density_from_bloch(b) for b in blochs]
    raw = linear_inversion_chi(IDEAL_INPUTS, outs)
    assert np.linalg.eigvalsh(0.5 * (raw + raw.conj().T)).min() < -1e-4  # genuinely unphysical
    pm = mle_project(raw, IDEAL_INPUTS, outs, [np.full(4, 0.01)] * 4)
    evals = np.linalg.eigvalsh(pm.chi)
    assert evals.min() >= -1e-8
    assert np.max(np.abs(pm.chi - pm.chi.conj().T)) < 1e-8
    assert channels.trace_preservation_residual(pm.chi) <= 1e-6


def test_unitary_channel_linear_inversion_exact_mle_stable():
    theta = 0.77
    u = np.cos(theta / 2) * channels.SIGMA_I - 1j * np.sin(theta / 2) * channels.SIGMA_X
    outs = [u @ r @ u.conj().T for r in IDEAL_INPUTS]
    oracle = channels.chi_from_unitary(u)
    raw = linear_inversion_chi(IDEAL_INPUTS, outs)
    assert np.max(np.abs(raw - oracle)) < 1e-9
    pm = mle_project(raw, IDEAL_INPUTS, outs)
    assert np.max(np.abs(pm.chi - raw)) < 1e-6


def test_chi_basis_conversion_round_trip():
    rng = np.random.default_rng(3)
    t = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    chi = t @ t.conj().T
    chi /= np.trace(chi).real
    back = channels.chi_from_pauli_basis(channels.chi_to_pauli_basis(chi))
    assert np.allclose(back, chi)
    # iY basis keeps a real chi real for a y-rotation channel
    u = np.cos(0.3) * channels.SIGMA_I - 1j * np.sin(0.3) * channels.SIGMA_Y
    chi_y = channels.chi_from_unitary(u)
    assert np.max(np.abs(chi_y.imag)) < 1e-12


def test_haar_average_equals_two_design_identity():
    # average state fidelity over the 6-state 2-design equals (2*chi_II + 1)/3
    for chi in (channels.identity_chi(), channels.depolarizing_chi(0.3)):
        avg = channels.average_state_fidelity(lambda r, c=chi: channels.apply_chi(c, r))
        assert avg == pytest.approx((2 * chi[0, 0].real + 1) / 3, abs=1e-12)
    # and for 100 Haar samples of a constant-fidelity channel, to 1e-6
    rng = stream(123, 0)
    states = [channels.haar_state(rng) for _ in range(100)]
    chi = channels.depolarizing_chi(0.2)
    avg = channels.average_state_fidelity(
        lambda r: channels.apply_chi(chi, r), states=states
    )
    assert avg == pytest.approx((2 * chi[0, 0].real + 1) / 3, abs=1e-6)


def test_simulated_channel_satisfies_average_fidelity_relation():
    # the store-and-retrieve chain without init/tomography pulses is a fixed
    # linear channel; its Haar-average fidelity must equal (2*chi_II + 1)/3
    from donor_memory.noise import NoiseConfig
    from donor_memory.pulses import SequenceConfig, ShiftModel, apply_sequence, build_memory_sequence
    from donor_memory.spin_core import DensityMatrix4, DonorParams

    seq = build_memory_sequence(SequenceConfig(input_state="plusZ"), DonorParams())
    shift = ShiftModel(applies_to="electron_and_nucleus", nuclear_scale=0.02)
    noise = NoiseConfig()

    def channel(rho2):
        # embed the electron state (rows: up, down) with the nucleus in Up
        mat = np.zeros((4, 4), dtype=complex)
        mat[np.ix_([0, 2], [0, 2])] = rho2
        out = apply_sequence(DensityMatrix4(mat), seq, noise, shift)
        m = out.matrix
        return np.array(
            [[m[0, 0] + m[1, 1], m[0, 2] + m[1, 3]], [m[2, 0] + m[3, 1], m[2, 2] + m[3, 3]]]
        )

    outs = [channel(r) for r in IDEAL_INPUTS]
    chi = process_tomography(IDEAL_INPUTS, outs).chi
    avg = channels.average_state_fidelity(channel)
    assert avg == pytest.approx((2 * chi[0, 0].real + 1) / 3, abs=1e-6)


def test_classical_measure_and_prepare_bound():
    best = channels.best_measure_and_prepare_fidelity()
    assert best <= 2.0 / 3.0 + 1e-3
    assert best > 0.66  # the optimizer does find the known optimum


def test_run_xy_tomography_analytic_curves():
    cfg = NoiseConfig(readout_visibility=1.0)
    plan = TomographyPlan()

    def make_prepare(bloch):
        def prepare(phi):
            x, y, z = bloch
            if phi is not None:
                # exact readout rotation: measuring sigma_phi
                val = 0.5 * (1 + x * math.cos(math.radians(phi)) + y * math.sin(math.radians(phi)))
                return DensityMatrix4(np.diag([val, 0, 1 - val, 0]).astype(complex))
            val = 0.5 * (1 + z)
            return DensityMatrix4(np.diag([val, 0, 1 - val, 0]).astype(complex))

        return prepare

    data = run_xy_tomography(make_prepare((1, 0, 0)), plan, cfg, analytic=True)
    assert np.allclose(data.means, 0.5 * (1 + np.cos(np.radians(PHASES))))
    flat = run_xy_tomography(make_prepare((0, 0, 1)), plan, cfg, analytic=True)
    assert np.allclose(flat.means, 0.5)
    ydata = run_xy_tomography(make_prepare((0, 1, 0)), plan, cfg, analytic=True)
    assert PHASES[np.argmax(ydata.means)] == pytest.approx(90.0)


def test_memory_fidelity_examples():
    fm, _ = memory_fidelity(0.81, 0.88)
    assert fm == pytest.approx(0.92, abs=0.005)
    fm2, _ = memory_fidelity(0.9, 0.9)
    assert fm2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        memory_fidelity(0.8, 0.0)
    fm3, err3 = memory_fidelity(0.8, 0.9, 0.04, 0.03)
    expected_err = (0.8 / 0.9) * math.sqrt((0.04 / 0.8) ** 2 + (0.03 / 0.9) ** 2)
    assert err3 == pytest.approx(expected_err)


def test_monte_carlo_zero_uncertainty_gives_zero_std():
    blochs = [(1, 0, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]
    errs = [(0.0, 0.0, 0.0)] * 4
    mc = monte_carlo_errors(IDEAL_INPUTS, blochs, errs, IDEAL_INPUTS, n_samples=8, seed=1)
    assert np.max(np.abs(mc.chi_std)) < 1e-12
    assert mc.process_fidelity_std == pytest.approx(0.0, abs=1e-12)


def test_monte_carlo_scales_linearly_with_input_sigma():
    blochs = [(1, 0, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]
    mc1 = monte_carlo_errors(
        IDEAL_INPUTS, blochs, [(0.01,) * 3] * 4, IDEAL_INPUTS, n_samples=300, seed=3
    )
    mc2 = monte_carlo_errors(
        IDEAL_INPUTS, blochs, [(0.02,) * 3] * 4, IDEAL_INPUTS, n_samples=300, seed=3
    )
    ratio = mc2.process_fidelity_std / mc1.process_fidelity_std
    assert 1.5 < ratio < 2.5


def test_monte_carlo_worker_independence():
    blochs = [(0.98, 0.02, 0.0), (0.0, 1.01, 0.0), (0, 0, -1), (0.01, 0, 0.99)]
    errs = [(0.01, 0.01, 0.01)] * 4
    serial = monte_carlo_errors(IDEAL_INPUTS, blochs, errs, IDEAL_INPUTS, n_samples=24, seed=5)
    parallel = monte_carlo_errors(
        IDEAL_INPUTS, blochs, errs, IDEAL_INPUTS, n_samples=24, seed=5, workers=4
    )
    assert np.array_equal(serial.chi_mean, parallel.chi_mean)
    assert np.array_equal(serial.chi_std, parallel.chi_std)
    assert np.array_equal(serial.state_fidelity_stds, parallel.state_fidelity_stds)
