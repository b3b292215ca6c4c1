import numpy as np
import pytest

from analysis.metrology import (COUNTING, ECS, HOMODYNE, NOON, QWP, ChannelParams, OutcomeModel, ProbeState,
                                classical_fisher_info, inverse_amplitude, lambert_w, mean_photon, mle_phase,
                                mle_study, outcome_distribution, precision_bound, quantum_fisher_info)
from core.exceptions import UsageError


@pytest.mark.parametrize("n_bar", [0.5, 2.0, 10.0])
def test_ecs_amplitude_round_trip(n_bar):
    alpha = inverse_amplitude(ECS, n_bar)
    assert mean_photon(ECS, alpha) == pytest.approx(n_bar, abs=1e-10)


@pytest.mark.parametrize("n_bar", [1e-6, 0.05, 40.0])
def test_ecs_state_from_mean_photon(n_bar):
    state = ProbeState.from_mean_photon(ECS, n_bar)
    x = state.alpha ** 2
    assert x == pytest.approx(n_bar + lambert_w(n_bar * np.exp(-n_bar)), rel=1e-12)
    assert mean_photon(ECS, state.alpha) == pytest.approx(n_bar, rel=1e-10)


def test_ecs_mean_photon_limit():
    assert mean_photon(ECS, 8.0) == pytest.approx(64.0, rel=1e-10)
    assert mean_photon(QWP, 3.0) == pytest.approx(9.0)
    assert ProbeState.from_mean_photon(NOON, 4.0).n_bar == 4.0
    with pytest.raises(UsageError):
        inverse_amplitude(NOON, 2.0)
    with pytest.raises(UsageError):
        mean_photon("GHZ", 1.0)


def test_quantum_fisher_information_reference_values():
    assert quantum_fisher_info(QWP, 3.0) == pytest.approx(12.0)
    assert quantum_fisher_info(ECS, 1.0) == pytest.approx(2.0 + lambert_w(np.exp(-1)))
    assert quantum_fisher_info(ECS, 1.0) == pytest.approx(2.27846, abs=1e-5)
    assert quantum_fisher_info(NOON, 5) == pytest.approx(25.0)


def test_quantum_fisher_information_with_loss():
    lost = ChannelParams(p=1.0)
    assert quantum_fisher_info(QWP, 4.0, lost) == 0.0
    assert quantum_fisher_info(ECS, 4.0, lost) == 0.0
    assert quantum_fisher_info(NOON, 4, ChannelParams(p=0.1)) == pytest.approx(16 * 0.9 ** 4)
    with pytest.raises(UsageError):
        ChannelParams(p=1.5)


def test_precision_bound_for_lossless_qwp():
    n_bar = 4.0
    delta, delta_sql = precision_bound(quantum_fisher_info(QWP, n_bar), 100, 0.0, n_bar)
    assert delta / delta_sql == pytest.approx(1 / np.sqrt(n_bar + 1))
    with pytest.raises(UsageError):
        precision_bound(1.0, 0, 0.0, 1.0)


@pytest.mark.parametrize("n_bar", [1.0, 4.0])
def test_qwp_homodyne_is_optimal(n_bar):
    alpha = inverse_amplitude(QWP, n_bar)
    info = classical_fisher_info(HOMODYNE, QWP, 0.4, alpha)
    assert info == pytest.approx(n_bar ** 2 + n_bar, rel=1e-3)


@pytest.mark.parametrize("n_bar", [1.0, 4.0])
def test_ecs_homodyne_reaches_quantum_limit(n_bar):
    alpha = inverse_amplitude(ECS, n_bar)
    info = classical_fisher_info(HOMODYNE, ECS, 0.9, alpha)
    assert info == pytest.approx(quantum_fisher_info(ECS, n_bar), rel=5e-3)


def test_ecs_homodyne_information_is_phase_independent():
    ch = ChannelParams(p=0.05)
    alpha = inverse_amplitude(ECS, 10.0)
    values = [classical_fisher_info(HOMODYNE, ECS, phi, alpha, ch) for phi in np.linspace(0.1, 3.0, 5)]
    assert (max(values) - min(values)) / np.mean(values) < 5e-3
    assert max(values) <= quantum_fisher_info(ECS, 10.0, ch) * (1 + 1e-4)


def test_ecs_counting_loses_information_at_zero_and_pi():
    ch = ChannelParams(p=0.05)
    alpha = inverse_amplitude(ECS, 4.0)
    assert classical_fisher_info(COUNTING, ECS, 0.0, alpha, ch) < 1e-8
    assert classical_fisher_info(COUNTING, ECS, np.pi, alpha, ch) < 1e-8
    assert classical_fisher_info(COUNTING, ECS, 0.7, alpha, ch) > 1.0


def test_qwp_counting_with_qubit_readout():
    n_bar = 4.0
    info = classical_fisher_info(COUNTING, QWP, 0.7, inverse_amplitude(QWP, n_bar))
    assert info == pytest.approx(n_bar ** 2 + n_bar, rel=1e-6)


def test_vacuum_homodyne_distribution_is_phase_independent():
    evaluate, _ = outcome_distribution(HOMODYNE, ECS, 0.3, 0.0)
    evaluate_other, _ = outcome_distribution(HOMODYNE, ECS, 2.1, 0.0)
    outcomes = np.array([[0.0, 0.0], [0.5, -1.0], [2.0, 0.3]])
    expected = np.exp(-np.sum(outcomes ** 2, axis=1)) / np.pi
    np.testing.assert_allclose(evaluate(outcomes), expected)
    np.testing.assert_allclose(evaluate_other(outcomes), expected)


def test_outcome_model_rejects_bad_inputs():
    with pytest.raises(UsageError):
        OutcomeModel("heterodyne", ECS, 1.0)
    with pytest.raises(UsageError):
        OutcomeModel(HOMODYNE, NOON, 1.0)
    with pytest.raises(UsageError):
        OutcomeModel(HOMODYNE, QWP, 1.0).probability([[0.0, 0.0]], 0.1)


def test_sampler_has_the_right_shape_and_seed_dependence(rng):
    _, sample = outcome_distribution(HOMODYNE, QWP, 0.7, 2.0)
    draws = sample(500, rng)
    assert draws.shape == (500, 3)
    assert set(np.unique(draws[:, 2])) <= {-1.0, 1.0}
    _, sample_ecs = outcome_distribution(COUNTING, ECS, 0.7, 2.0)
    counts = sample_ecs(200, rng)
    assert counts.shape == (200, 2)
    assert np.all(counts >= 0)


def test_mle_recovers_phase(rng):
    alpha, phi = 2.0, 0.7
    model = OutcomeModel(HOMODYNE, QWP, alpha)
    samples = model.sample(phi, 2000, rng)
    result = mle_phase(samples, HOMODYNE, QWP, alpha)
    assert result["phi_hat"] == pytest.approx(phi, abs=0.05)
    low, high = result["ci"]
    assert low < result["phi_hat"] < high
    with pytest.raises(UsageError):
        mle_phase(samples, HOMODYNE, QWP, alpha, window=(-4.0, 0.0))


@pytest.mark.slow
def test_mle_variance_approaches_quantum_bound():
    study = mle_study(HOMODYNE, QWP, 2.0, 0.7, M=10_000, repetitions=200, seed=2024)
    assert study["variance"] == pytest.approx(study["crb_quantum"], rel=0.2)
    assert study["mean"] == pytest.approx(0.7, abs=0.01)
