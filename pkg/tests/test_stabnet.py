import numpy as np
import pytest

from analysis.flyingcat import CheckConfig
from analysis.stabnet import (IDENTITY, STABILIZERS, X_CHECKS, Z_CHECKS, MeasurementNoise, PauliString,
                              TeleportInput, average_fidelity, controlled_teleport, decode, exact_average_fidelity,
                              fidelity_form, haar_weight_moments, measure_pauli, prepare_tetrahedron, stabilizer_projector, tetrahedron_state, witness)
from core.exceptions import UsageError
from core.qcore import fidelity, ket


def half_syndrome(error: PauliString, checks) -> tuple:
    return tuple(1 if error.commutes(check) else -1 for check in checks)


def test_pauli_products_match_matrices():
    words = ["XYZIIX", "ZZXYIY", "IXIYIZ"]
    for a in words:
        for b in words:
            left, right = PauliString(a), PauliString(b)
            np.testing.assert_allclose((left * right).matrix(), left.matrix() @ right.matrix(), atol=1e-12)


def test_pauli_labels_and_validation():
    minus = PauliString.from_label("-XXIIZI")
    assert minus.sign == -1
    assert minus.support == (1, 2, 5)
    assert str(minus) == "-XXIIZI"
    with pytest.raises(UsageError):
        PauliString("XQ")
    with pytest.raises(UsageError):
        PauliString.from_sites("Z", (0,))


def test_stabilizers_fix_the_tetrahedron_state():
    psi = tetrahedron_state()
    assert len(STABILIZERS) == 6
    for s in STABILIZERS:
        np.testing.assert_allclose(s.matrix() @ psi.amplitudes, psi.amplitudes, atol=1e-12)
    projector = stabilizer_projector(STABILIZERS)
    np.testing.assert_allclose(projector, np.outer(psi.amplitudes, psi.amplitudes.conj()), atol=1e-12)


def test_decoder_corrects_every_single_qubit_error():
    for qubit in range(1, 7):
        x_error = PauliString.from_sites("X", (qubit,))
        z_error = PauliString.from_sites("Z", (qubit,))
        assert decode(half_syndrome(x_error, Z_CHECKS), "X").word == x_error.word
        assert decode(half_syndrome(z_error, X_CHECKS), "Z").word == z_error.word
    assert decode((1, 1, 1), "X") == IDENTITY
    assert decode((-1, -1, -1), "Z").support == (1, 2)
    with pytest.raises(UsageError):
        decode((1, 0, 1), "X")
    with pytest.raises(UsageError):
        decode((1, 1, 1), "Y")


def test_measuring_a_stabilizer_leaves_the_state_alone():
    psi = tetrahedron_state()
    outcome, post = measure_pauli(psi, STABILIZERS[0])
    assert outcome == 1
    assert fidelity(psi, post) == pytest.approx(1.0)
    with pytest.raises(UsageError):
        measure_pauli(psi, PauliString("XX"))


def test_noiseless_preparation_reaches_the_tetrahedron_state(rng):
    result = prepare_tetrahedron(ket((2,) * 6, (0,) * 6), rng=rng)
    assert result.syndrome[:3] == (1, 1, 1)
    assert fidelity(tetrahedron_state(), result.state) == pytest.approx(1.0, abs=1e-10)


def test_witness_of_ideal_state():
    values = witness(tetrahedron_state())
    assert values["projector"] == pytest.approx(-0.5)
    assert values["two_setting"] == pytest.approx(-0.5)
    assert values["fidelity"] == pytest.approx(1.0)
    with pytest.raises(UsageError):
        witness()


def test_witness_with_useless_measurement():
    values = witness(None, MeasurementNoise(q=0.5))
    assert values["fidelity"] == pytest.approx(1 / 64)
    assert values["projector"] > 0


def test_witness_first_order_estimate():
    noise = MeasurementNoise(q=0.005, p1=0.0005, p2=0.0005)
    values = witness(None, noise)
    assert values["projector"] == pytest.approx(values["estimate"], abs=2e-3)
    assert values["projector"] < 0
    assert values["two_setting"] >= values["projector"] - 1e-12


def test_noise_from_check_config():
    cfg = CheckConfig(alpha=2.0, eta=(0.01, 0.01, 0.0))
    noise = MeasurementNoise.from_check(cfg)
    assert noise.q == pytest.approx(cfg.p_M)
    assert not noise.is_noiseless
    with pytest.raises(UsageError):
        MeasurementNoise(q=1.5)


def test_teleportation_with_cooperation_is_perfect(rng):
    phi = TeleportInput.haar(rng)
    result = controlled_teleport(phi, cooperate=True, rng=rng)
    assert result["fidelity"] == pytest.approx(1.0, abs=1e-10)
    assert len(result["transcript"]["probabilities"]) == 3


def test_teleportation_without_cooperation_keeps_bell_weights(rng):
    phi = TeleportInput(0.6, 0.8j)
    result = controlled_teleport(phi, cooperate=False, rng=rng)
    assert result["fidelity"] == pytest.approx(0.6 ** 4 + 0.8 ** 4)
    with pytest.raises(UsageError):
        TeleportInput(1.0, 1.0)


def test_average_fidelity_matches_haar_average():
    mean, stderr = average_fidelity(400, cooperate=False, seed=7)
    assert abs(mean - exact_average_fidelity(False)) < 4 * stderr
    assert exact_average_fidelity(False) == pytest.approx(0.4)
    mean_coop, _ = average_fidelity(20, cooperate=True, seed=7)
    assert mean_coop == pytest.approx(1.0, abs=1e-10)
    assert average_fidelity(50, seed=3) == average_fidelity(50, seed=3)


@pytest.mark.parametrize("cooperate", [False, True])
def test_teleport_fidelity_is_quadratic_in_bell_weights(cooperate, rng):
    form = fidelity_form(cooperate)
    for _ in range(5):
        phi = TeleportInput.haar(rng)
        weights = np.abs(phi.coefficients) ** 2
        result = controlled_teleport(phi, cooperate=cooperate, rng=rng)
        assert result["fidelity"] == pytest.approx(weights @ form @ weights, abs=1e-10)


def test_haar_weight_moments_match_sampling(rng):
    moments = haar_weight_moments(4)
    assert moments[0, 0] == pytest.approx(2 / 20)
    assert moments[0, 1] == pytest.approx(1 / 20)
    assert moments.sum() == pytest.approx(1.0)
    weights = np.array([np.abs(TeleportInput.haar(rng).coefficients) ** 2 for _ in range(20_000)])
    sampled = weights.T @ weights / len(weights)
    np.testing.assert_allclose(sampled, moments, atol=6e-3)


def test_exact_average_agrees_with_larger_monte_carlo():
    mean, stderr = average_fidelity(2000, cooperate=False, seed=21)
    assert abs(mean - exact_average_fidelity(False)) < 4 * stderr
    assert exact_average_fidelity(True) == pytest.approx(1.0)
