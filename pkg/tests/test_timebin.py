import numpy as np
import pytest
from scipy.integrate import trapezoid

from analysis.timebin import (ABSORB, CZ_TARGET, EMIT, GOLDEN, HAAR_MC, HAAR_STATE, PREP_Q1, BathSpec, GateConfig,
                              LossBackaction, apply_backaction, apply_measurement_error, fit_power_law,
                              forward_waveform, gate_fidelity, gaussian_waveform, initial_state, loss_backaction,
                              sample_tls_bath, scaling_sweep, shape_drive, simulate_cz, spanning_inputs)
from core.exceptions import DimensionError, UsageError
from core.qcore import PureState, basis, random_density


def ideal_cz(psi: PureState) -> np.ndarray:
    out = CZ_TARGET @ psi.amplitudes
    return np.outer(out, out.conj())


def two_term_model(kappa: float, a: float = 1.0, b: float = 1.0):
    return lambda tau, t1: a / (kappa * tau) ** 2 + b * tau / t1


def test_gaussian_waveform_is_normalized():
    grid = np.linspace(0.0, 16.0, 1025)
    u = gaussian_waveform(grid, 4.0, 1.0)
    assert trapezoid(np.abs(u.samples) ** 2, grid) == pytest.approx(1.0)
    with pytest.raises(UsageError):
        gaussian_waveform(grid, 4.0, 0.0)


def test_emission_drive_round_trip():
    kappa, tau = 1.0, 40.0
    grid = np.linspace(0.0, 16 * tau, 2049)
    u = gaussian_waveform(grid, 4 * tau, tau)
    omega, info = shape_drive(EMIT, u, kappa)
    emitted = forward_waveform(omega, kappa)
    mismatch = trapezoid(np.abs(emitted.samples - u.samples) ** 2, grid)
    assert mismatch < 1e-3
    assert info["max_drive"] == pytest.approx(np.max(np.abs(omega.samples)))


def test_absorption_drive_mirrors_emission():
    grid = np.linspace(0.0, 8.0, 801)
    u = gaussian_waveform(grid, 4.0, 1.0)
    emit, _ = shape_drive(EMIT, u, 40.0)
    absorb, _ = shape_drive(ABSORB, u, 40.0)
    np.testing.assert_allclose(absorb.samples, emit.samples[::-1], rtol=1e-6, atol=1e-12)


def test_shape_drive_rejects_bad_inputs():
    grid = np.linspace(0.0, 8.0, 101)
    u = gaussian_waveform(grid, 4.0, 1.0)
    with pytest.raises(UsageError):
        shape_drive("reflect", u, 1.0)
    with pytest.raises(UsageError):
        shape_drive(EMIT, u.samples, 1.0)
    with pytest.raises(UsageError):
        shape_drive(EMIT, u, 0.0)


def test_gate_config_layout():
    cfg = GateConfig(kappa=1.0, tau=2.0, n_max=2)
    assert cfg.total_time == pytest.approx(32.0)
    assert cfg.peaks == (8.0, 24.0)
    assert cfg.dims == (3, 3, 2, 3, 3, 3)
    assert cfg.gamma == 0.0
    with pytest.raises(UsageError):
        GateConfig(n_max=0)
    with pytest.raises(UsageError):
        GateConfig(t1=-1.0)


def test_preparation_maps_qubit_onto_upper_levels():
    np.testing.assert_allclose(PREP_Q1 @ basis(3, 0), basis(3, 1))
    np.testing.assert_allclose(PREP_Q1 @ basis(3, 1), basis(3, 2))


def test_initial_state():
    cfg = GateConfig(kappa=1.0, tau=1.0, n_max=1)
    psi = PureState((2, 2), np.array([0.0, 0.0, 1.0, 0.0]))
    rho = initial_state(psi, cfg)
    assert rho.trace() == pytest.approx(1.0)
    # Q1 |e> -> |f>, Q2 |g>, tutto il resto nel fondamentale
    index = np.ravel_multi_index((2, 0, 0, 0, 0, 0), cfg.dims)
    assert rho.entries[index, index] == pytest.approx(1.0)
    with pytest.raises(DimensionError):
        initial_state(PureState((2,), np.array([1.0, 0.0])), cfg)


def test_measurement_error_conventions():
    assert apply_measurement_error(0.98, 0.1) == pytest.approx(0.9 * 0.98)
    assert apply_measurement_error(1.0, 0.1, HAAR_STATE) == pytest.approx(0.92)
    with pytest.raises(UsageError):
        apply_measurement_error(1.0, 1.2)
    with pytest.raises(UsageError):
        apply_measurement_error(1.0, 0.1, "altro")


def test_spanning_inputs_are_independent():
    columns = np.column_stack([s.dm().entries.ravel() for s in spanning_inputs()])
    assert np.linalg.matrix_rank(columns) == 16


def test_exact_gate_has_unit_fidelity():
    result = gate_fidelity(channel=ideal_cz)
    assert result["epsilon"] == pytest.approx(0.0, abs=1e-12)
    assert result["success_probability"] == pytest.approx(1.0)


def test_fidelity_with_embedded_output_and_postselection():
    def lossy(psi):
        embedded = np.zeros((6, 6), dtype=complex)
        embedded[:4, :4] = 0.5 * ideal_cz(psi)
        return embedded

    result = gate_fidelity(channel=lossy)
    assert result["fidelity"] == pytest.approx(1.0, abs=1e-12)
    assert result["success_probability"] == pytest.approx(0.5)


def test_identity_channel_average_fidelity():
    identity = lambda psi: psi.dm().entries
    assert gate_fidelity(channel=identity)["fidelity"] == pytest.approx(0.4)
    mc = gate_fidelity(channel=identity, averaging=HAAR_MC, samples=4000, seed=5)
    assert abs(mc["fidelity"] - 0.4) < 4 * mc["stderr"]
    with pytest.raises(UsageError):
        gate_fidelity(channel=identity, averaging="altro")


def test_measurement_error_rescales_gate_fidelity():
    identity = lambda psi: psi.dm().entries
    result = gate_fidelity(channel=identity, p_m=0.1)
    assert result["epsilon"] == pytest.approx(1 - 0.9 * 0.4)


def test_fit_power_law_exact():
    x = np.array([1.0, 10.0, 100.0])
    fit = fit_power_law(x, 3.0 * x ** -0.5)
    assert fit["prefactor"] == pytest.approx(3.0)
    assert fit["exponent"] == pytest.approx(-0.5)
    with pytest.raises(UsageError):
        fit_power_law([1.0], [1.0])


def test_scaling_of_two_term_model():
    cfg = GateConfig(kappa=1.0)
    t1_list = [1e3, 1e4, 1e5, 1e6]
    tau_grid = np.logspace(0.0, 3.5, 50)
    result = scaling_sweep(t1_list, tau_grid, cfg, infidelity=two_term_model(cfg.kappa), refine=GOLDEN)
    assert result["fits"]["xi"] == pytest.approx(1 / 3, abs=1e-6)
    assert result["fits"]["zeta"] == pytest.approx(-2 / 3, abs=1e-6)
    assert result["fits"]["A"] == pytest.approx(1.0)
    assert result["fits"]["B"] == pytest.approx(1.0)
    assert not result["warnings"]
    eps_min = [row["eps_min"] for row in result["rows"]]
    assert all(np.diff(eps_min) < 0)


def test_parabolic_refinement_is_close():
    cfg = GateConfig(kappa=1.0)
    result = scaling_sweep([1e3, 1e4, 1e5, 1e6], np.logspace(0.0, 3.5, 80), cfg,
                           infidelity=two_term_model(cfg.kappa))
    assert result["fits"]["xi"] == pytest.approx(1 / 3, abs=0.02)
    assert result["fits"]["zeta"] == pytest.approx(-2 / 3, abs=0.02)


def test_scaling_sweep_warnings_and_errors():
    cfg = GateConfig(kappa=1.0)
    model = two_term_model(cfg.kappa)
    result = scaling_sweep([1e3, 1e4], np.logspace(0.0, 3.0, 30), cfg, infidelity=model)
    assert result["warnings"]
    with pytest.raises(UsageError):
        scaling_sweep([1e3, 1e4], np.logspace(0.0, 3.0, 30), cfg, refine=GOLDEN)
    with pytest.raises(UsageError):
        scaling_sweep([1e3, 1e4], [1.0, 2.0], cfg, infidelity=model)


def test_flat_bath_closed_form():
    bath = BathSpec.flat(0.1)
    result = loss_backaction(bath, None, tau_sep=2.0, tau=1.0)
    assert result.q == pytest.approx(0.1)
    assert result.coherence == pytest.approx(np.exp(-1.0))
    assert result.eta == pytest.approx(0.5 * (1 - np.exp(-1.0)))


def test_flat_bath_quadrature_agrees_with_closed_form():
    grid = np.linspace(0.0, 16.0, 801)
    u = gaussian_waveform(grid, 4.0, 1.0)
    bath = BathSpec.flat(0.1)
    quadrature = loss_backaction(bath, u, tau_sep=2.0)
    closed = loss_backaction(bath, None, tau_sep=2.0, tau=1.0)
    assert quadrature.q == pytest.approx(closed.q, rel=1e-4)
    assert quadrature.coherence == pytest.approx(closed.coherence, abs=1e-4)


def test_wide_gaussian_bath_recovers_flat_result():
    result = loss_backaction(BathSpec.gaussian(0.1, 50.0), None, tau_sep=2.0, tau=1.0)
    assert abs(result.coherence) == pytest.approx(np.exp(-1.0), rel=0.01)


def test_narrow_gaussian_bath_is_nearly_backaction_free():
    width, tau_sep = 0.1, 1.0
    result = loss_backaction(BathSpec.gaussian(0.1, width), None, tau_sep=tau_sep, tau=1e-3)
    assert abs(result.coherence) == pytest.approx(1 - 0.005, abs=1e-4)
    assert result.eta == pytest.approx((width * tau_sep) ** 2 / 4, rel=0.01)


def test_gaussian_bath_quadrature_agrees_with_closed_form():
    bath = BathSpec.gaussian(0.05, 0.7)
    grid = np.linspace(0.0, 16.0, 801)
    u = gaussian_waveform(grid, 4.0, 1.0)
    quadrature = loss_backaction(bath, u, tau_sep=1.5)
    closed = loss_backaction(bath, None, tau_sep=1.5, tau=1.0)
    assert quadrature.q == pytest.approx(closed.q, rel=1e-4)
    assert quadrature.coherence == pytest.approx(closed.coherence, abs=1e-4)


def test_single_tls_only_shifts_the_phase():
    bath = BathSpec.discrete([0.05], [0.3])
    result = loss_backaction(bath, None, tau_sep=2.0, tau=1.0)
    assert abs(result.coherence) == pytest.approx(1.0)
    assert result.phase == pytest.approx(-0.6)
    assert result.q == pytest.approx(0.05 ** 2 * 2 * np.sqrt(np.pi) * np.exp(-0.09))


def test_sampled_bath_reproduces_loss_probability(rng):
    bath = BathSpec.gaussian(0.1, 0.8)
    sampled = sample_tls_bath(bath, 20_000, rng)
    discrete = loss_backaction(sampled, None, tau_sep=1.0, tau=1.0)
    closed = loss_backaction(bath, None, tau_sep=1.0, tau=1.0)
    assert discrete.q == pytest.approx(closed.q, rel=0.05)
    with pytest.raises(UsageError):
        sample_tls_bath(BathSpec.flat(0.1), 10, rng)


def test_bath_validation():
    with pytest.raises(UsageError):
        BathSpec("lorentzian")
    with pytest.raises(UsageError):
        BathSpec.gaussian(0.1, 0.0)
    with pytest.raises(UsageError):
        BathSpec.tabulated([0.0, 1.0], [1.0, -1.0])
    with pytest.raises(UsageError):
        LossBackaction(q=0.1, coherence=1.5)
    with pytest.raises(UsageError):
        loss_backaction(BathSpec.flat(0.1), None, tau_sep=1.0)


def test_compensated_backaction_is_dephasing(rng):
    rho = random_density((2, 2), rng)
    coherence = 0.8 * np.exp(0.3j)
    out = apply_backaction(rho, coherence, compensate=True)
    eta = 0.5 * (1 - abs(coherence))
    z1 = np.kron(np.diag([1.0, -1.0]), np.eye(2))
    expected = (1 - eta) * rho.entries + eta * z1 @ rho.entries @ z1
    np.testing.assert_allclose(out.entries, expected, atol=1e-12)
    untouched = apply_backaction(rho, 1.0)
    np.testing.assert_allclose(untouched.entries, rho.entries, atol=1e-14)
    with pytest.raises(UsageError):
        apply_backaction(rho, 1.2)


@pytest.mark.slow
def test_simulated_gate_is_accurate_without_decay():
    result = gate_fidelity(GateConfig(n_max=1))
    assert result["fidelity"] >= 0.99


@pytest.mark.slow
def test_loss_is_heralded_on_the_ancilla():
    cfg = GateConfig(n_max=1)
    psi = PureState((2, 2), np.full(4, 0.5))
    lossless = simulate_cz(psi, cfg)
    assert lossless.final_state.trace() == pytest.approx(1.0, abs=1e-6)
    lossy = simulate_cz(psi, cfg, loss=0.2)
    assert lossy.probabilities["f"] == pytest.approx(0.2 + lossless.probabilities["f"], abs=0.02)


def test_backaction_purity_for_balanced_bins():
    psi = PureState((2, 2), np.kron([1.0, 1.0], [1.0, 0.0]) / np.sqrt(2))
    for coherence in (1.0, 0.6j, 0.3 * np.exp(1.1j)):
        out = apply_backaction(psi, coherence)
        assert out.purity() == pytest.approx((1 + abs(coherence) ** 2) / 2)
