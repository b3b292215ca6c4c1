import numpy as np
import pytest
from scipy.special import erfc

from analysis.cqed_analytics import gaussian_spectral_density
from analysis.flyingcat import (BASIS_X, THREE_QUBITS, CheckConfig, FeasibilityParams, dephasing_composition,
                                feasibility, ghz_prepare, ghz_state, homodyne_parity_measurement, loss_amplitudes,
                                majority_vote_error, measurement_error, p_tot_approx, p_tot_exact, parity_check_channel,
                                parity_decomposition, soft_decision_error, strong_coupling_reflection, total_error)
from core.exceptions import DimensionError, UsageError
from core.qcore import PureState, fidelity, ket, random_density


def superposition(*indices) -> PureState:
    amplitudes = np.zeros(8, dtype=complex)
    amplitudes[list(indices)] = 1.0
    return PureState(THREE_QUBITS, amplitudes / np.linalg.norm(amplitudes))


def test_measurement_error_reference_values():
    assert measurement_error(0.0) == 0.5
    assert measurement_error(1.0) == pytest.approx(erfc(np.sqrt(2)) / 2, abs=1e-12)
    assert measurement_error(1.0) == pytest.approx(0.02275, abs=1e-5)


def test_loss_amplitudes_conserve_energy():
    alpha_bar, a1, a2, a3 = loss_amplitudes(2.0, (0.1, 0.2, 0.3))
    assert alpha_bar ** 2 + a1 ** 2 + a2 ** 2 + a3 ** 2 == pytest.approx(4.0)
    with pytest.raises(UsageError):
        loss_amplitudes(2.0, (0.1, 0.2))


def test_check_config_validation():
    with pytest.raises(UsageError):
        CheckConfig(alpha=0.0)
    with pytest.raises(UsageError):
        CheckConfig(alpha=1.0, basis="Y")
    assert CheckConfig(alpha=1.0, basis=BASIS_X).error_operators == ("IXX", "IIX")


def test_parity_decomposition():
    parts = parity_decomposition(superposition(0, 1))
    assert parts["c+"] == pytest.approx(1 / np.sqrt(2))
    assert parts["c-"] == pytest.approx(1 / np.sqrt(2))
    assert parity_decomposition(ket(THREE_QUBITS, (0, 1, 1)))["xi-"] is None
    with pytest.raises(DimensionError):
        parity_decomposition(ket((2, 2), (0, 0)))


def test_even_parity_input_is_not_disturbed():
    state = superposition(0, 3)
    cfg = CheckConfig(alpha=3.0)
    joint = parity_check_channel(state, cfg)
    result = homodyne_parity_measurement(joint, outcome=1)
    assert result.probability == pytest.approx(1 - cfg.p_M, abs=1e-12)
    np.testing.assert_allclose(result.state.entries, state.dm().entries, atol=1e-10)
    assert result.joint_errors["+,-"] == pytest.approx(0.0, abs=1e-12)


def test_odd_parity_input_gives_wrong_outcome_with_probability_p_m():
    cfg = CheckConfig(alpha=1.0)
    joint = parity_check_channel(superposition(1, 2), cfg)
    result = homodyne_parity_measurement(joint, outcome=1)
    assert result.probability == pytest.approx(cfg.p_M, abs=1e-12)
    assert result.joint_errors["+,-"] == pytest.approx(cfg.p_M, abs=1e-12)
    with pytest.raises(UsageError):
        homodyne_parity_measurement(joint, outcome=0)


def test_lossy_channel_preserves_trace(rng):
    rho = random_density(THREE_QUBITS, rng)
    for basis in ("Z", "X"):
        joint = parity_check_channel(rho, CheckConfig(alpha=1.5, eta=(0.05, 0.1, 0.0), basis=basis))
        assert joint.trace() == pytest.approx(1.0, abs=1e-12)
        plus = homodyne_parity_measurement(joint, outcome=1).probability
        minus = homodyne_parity_measurement(joint, outcome=-1).probability
        assert plus + minus == pytest.approx(1.0, abs=1e-12)


def test_dephasing_composition_without_loss_is_identity(rng):
    rho = random_density(THREE_QUBITS, rng)
    out = dephasing_composition(rho, CheckConfig(alpha=1.0))
    np.testing.assert_allclose(out.entries, rho.entries, atol=1e-14)
    lossy = dephasing_composition(rho, CheckConfig(alpha=1.0, eta=(0.2, 0.2, 0.0)))
    assert lossy.trace() == pytest.approx(1.0)


def test_total_error_has_an_interior_optimum():
    result = total_error(1.0, 0.01, 0.01)
    alpha_opt = result["alpha_opt"]
    assert 0.1 < alpha_opt < 10.0
    assert not result["warnings"]
    assert result["p_tot_opt"] <= p_tot_exact(alpha_opt - 0.05, 0.01, 0.01)
    assert result["p_tot_opt"] <= p_tot_exact(alpha_opt + 0.05, 0.01, 0.01)
    assert result["p_tot_opt"] < min(p_tot_exact(0.1, 0.01, 0.01), p_tot_exact(10.0, 0.01, 0.01))


def test_asymptotic_measurement_error_without_loss():
    assert p_tot_approx(3.0, 0.0) == pytest.approx(p_tot_exact(3.0, 0.0, 0.0), rel=0.05)


def test_total_error_without_loss_hits_the_bracket_edge():
    result = total_error(1.0, 0.0, 0.0)
    assert result["alpha_opt"] == pytest.approx(10.0)
    assert result["warnings"]
    with pytest.raises(UsageError):
        total_error(1.0, 1.0, 0.0)


def test_majority_vote_error():
    p = 0.1
    assert majority_vote_error(p, 1) == pytest.approx(p)
    assert majority_vote_error(p, 2) == pytest.approx(p)
    assert majority_vote_error(p, 3) == pytest.approx(3 * p ** 2 - 2 * p ** 3)
    with pytest.raises(UsageError):
        majority_vote_error(p, 0)


def test_soft_decision_matches_longer_pulse(rng):
    result = soft_decision_error(0.5, 4, 200_000, rng)
    assert result["expected"] == pytest.approx(measurement_error(1.0))
    assert abs(result["error"] - result["expected"]) < 4 * result["standard_error"]


def test_ghz_fidelity_equals_one_minus_error():
    sigma, p = ghz_prepare(2.0, 0.02, 0.03)
    assert fidelity(ghz_state(), sigma) == pytest.approx(1 - p, abs=1e-10)
    ideal, p_ideal = ghz_prepare(6.0, 0.0, 0.0)
    assert p_ideal < 1e-12
    assert fidelity(ghz_state(), ideal) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(UsageError):
        ghz_prepare(0.01, 0.0, 0.0)


def test_feasibility_error_budget():
    fp = FeasibilityParams(chi=-2 * np.pi * 1.05e6, kappa_int=2 * np.pi * 0.22e6, tau=500e-9, t2_star=6e-6)
    budget = feasibility(fp, gaussian_spectral_density(fp.tau), 1.0)
    assert budget["bandwidth_term"] == pytest.approx(0.046, abs=0.002)
    assert budget["internal_loss_term"] == pytest.approx(0.011, abs=0.002)
    assert budget["epsilon_qubit"] == pytest.approx(0.083, abs=0.003)
    assert budget["epsilon_reflect"] == pytest.approx(budget["epsilon_reflect_approx"], rel=0.25)
    with pytest.raises(UsageError):
        FeasibilityParams(chi=1.0, kappa_int=0.0, tau=1.0, t2_star=1.0, eta_trans=2.0)


def test_strong_coupling_phase_shift():
    assert strong_coupling_reflection(0.0, 10.0, 1.0, s=1) == pytest.approx(-1.0)
    assert strong_coupling_reflection(0.0, 100.0, 1.0, gamma=0.01, s=0) == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(UsageError):
        strong_coupling_reflection(0.0, 1.0, 1.0, s=2)
