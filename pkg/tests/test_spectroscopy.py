import numpy as np
import pytest
from scipy.integrate import quad

from analysis.cqed_analytics import CavityQubitParams, vacuum_rabi_transmission
from analysis.spectroscopy import (NoiseSpectrum, PulseSequence, PurcellParams, SingleSpinEnv, TransientSpectrum,
                                   broadened_transmission, coherence_functional, cpmg, cpmg_signal_asymptote,
                                   filter_function, gaussian_eta_average, hahn, purcell_envelope,
                                   quasistatic_spectrum, signal_bound, single_spin_echo, white_spectrum)
from core.exceptions import UsageError


def signed_integral(seq: PulseSequence, omega: float, t: float, part) -> float:
    points = [p for p in seq.pulse_times if p < t]
    return quad(lambda s: float(part(np.exp(1j * omega * s)) * seq.sign(s)), 0.0, t,
                points=points or None, limit=200)[0]


def test_cpmg_pulse_positions():
    seq = cpmg(3, 2.0)
    assert seq.duration == pytest.approx(6.0)
    assert seq.pulse_times == (1.0, 3.0, 5.0)
    assert seq.area(6.0) == pytest.approx(0.0)
    assert hahn(1.0).pulse_times == (0.5,)


def test_pulse_sequence_validation():
    with pytest.raises(UsageError):
        PulseSequence(1.0, (0.5, 0.2))
    with pytest.raises(UsageError):
        PulseSequence(1.0, (1.0,))
    with pytest.raises(UsageError):
        cpmg(0, 1.0)
    with pytest.raises(UsageError):
        hahn(1.0).segments(2.0)


def test_classical_filter_vanishes_at_zero_frequency():
    seq = cpmg(4, 1.0)
    assert filter_function("classical", seq, 0.0, 4.0) == pytest.approx(0.0, abs=1e-15)
    small = filter_function("classical", seq, 1e-3, 4.0)
    assert small < 1e-9


def test_free_induction_filter_closed_form():
    seq = PulseSequence.free_induction(2.0)
    omega = np.linspace(0.1, 10.0, 7)
    np.testing.assert_allclose(filter_function("classical", seq, omega, 2.0), 1 - np.cos(2.0 * omega), atol=1e-12)
    np.testing.assert_allclose(filter_function("quantum", seq, omega, 2.0), 1 - np.cos(2.0 * omega), atol=1e-12)


def test_hahn_filters_match_direct_integration():
    seq = hahn(2.0)
    omega, t = 3.0, 2.0
    re = signed_integral(seq, omega, t, np.real)
    im = signed_integral(seq, omega, t, np.imag)
    expected_c = 0.5 * omega ** 2 * (re ** 2 + im ** 2)
    expected_q = omega * signed_integral(seq, omega, t, np.imag)
    assert filter_function("classical", seq, omega, t) == pytest.approx(expected_c, rel=1e-8)
    assert filter_function("quantum", seq, omega, t) == pytest.approx(expected_q, rel=1e-8)
    with pytest.raises(UsageError):
        filter_function("altro", seq, omega, t)


@pytest.mark.parametrize("seq", [PulseSequence.free_induction(3.0), hahn(3.0), cpmg(2, 1.5)])
def test_white_noise_gives_exponential_decay(seq):
    gamma = 0.4
    chi, phi_q = coherence_functional(seq, white_spectrum(gamma), 3.0)
    assert chi == pytest.approx(gamma * 3.0 / 2, rel=1e-4)
    assert phi_q == 0.0


def test_quasistatic_noise_is_refocused_by_echo():
    gamma = 0.5
    spectrum = quasistatic_spectrum(2 * np.pi * gamma ** 2)
    chi_free, _ = coherence_functional(PulseSequence.free_induction(2.0), spectrum, 2.0)
    chi_echo, _ = coherence_functional(hahn(2.0), spectrum, 2.0)
    assert chi_free == pytest.approx(gamma ** 2 * 2.0 ** 2 / 2, rel=1e-9)
    assert chi_echo == pytest.approx(0.0, abs=1e-12)


def test_negative_quasistatic_weight_is_rejected():
    with pytest.raises(UsageError):
        NoiseSpectrum(lambda w: w, delta_weight=-1.0)


def test_single_spin_echo_without_transverse_field():
    env = SingleSpinEnv(A=1.0, gamma_bx=0.0, gamma_bz=0.3, gamma_phi=0.05)
    tau = np.linspace(0.5, 20.0, 9)
    np.testing.assert_allclose(single_spin_echo(tau, env), np.exp(-0.05 * tau))
    mixed = SingleSpinEnv(A=1.0, gamma_bx=0.4, gamma_bz=0.3)
    assert 0 < mixed.visibility <= 1
    assert np.all(np.abs(single_spin_echo(tau, mixed)) <= 1 + 1e-12)


def test_gaussian_average_moments():
    t2 = 0.5
    value, _, converged = gaussian_eta_average(lambda eta: eta ** 2, t2)
    assert converged
    assert value == pytest.approx(2 / t2 ** 2)
    one, _, _ = gaussian_eta_average(lambda eta: np.ones_like(eta), t2)
    assert one == pytest.approx(1.0)


def test_purcell_time_in_units_of_tau():
    p = PurcellParams(g=0.1, kappa=1.0, t2_star=0.1, tau=10.0)
    assert 1 / (p.gamma_p * p.tau) == pytest.approx(2000.0)


def test_purcell_quadrature_approaches_asymptote():
    p = PurcellParams(g=0.1, kappa=1.0, t2_star=0.1, tau=10.0)
    n = int(round(9 / (p.gamma_p * p.tau)))
    result = purcell_envelope(n, p)
    assert result["gamma_p_n_tau"] == pytest.approx(9.0)
    assert result["regime"] == "crossover"
    assert result["exact"] == pytest.approx(result["asymptote"], rel=0.1)
    assert purcell_envelope(0, p)["exact"] == pytest.approx(1.0)


def test_transient_spectrum_inversion_recovers_envelope():
    n_echoes = 7
    envelope = np.exp(-0.1 * np.arange(n_echoes + 1)) * np.exp(0.3j * np.arange(n_echoes + 1))
    g_bar = np.linspace(1.0, 0.6, n_echoes + 1)
    spectrum = TransientSpectrum(g_bar, Delta=1.3, tau=2.0, kappa=1.0, g=0.1, t2_star=0.1)
    samples = spectrum.field(envelope, spectrum.sweep_detunings())
    np.testing.assert_allclose(spectrum.reconstruct(samples), envelope, atol=1e-12)


def test_signal_bounds():
    assert signal_bound("pulsed", 1.0, 0.25) == pytest.approx(0.5)
    assert signal_bound("cpmg", 1.0, 1.0, tau=1e6) < 1.0
    with pytest.raises(UsageError):
        signal_bound("hahn", 1.0, 0.5)
    with pytest.raises(UsageError):
        signal_bound("altro", 1.0, 0.5)
    p = PurcellParams(g=0.1, kappa=1.0, t2_star=0.1, tau=10.0)
    estimate = cpmg_signal_asymptote(p, 0.5)
    assert estimate["n_eff"] == pytest.approx(2.0 / (9 * p.gamma_p * p.tau))


def test_broadened_transmission_without_spin_reduces_to_bare_transmission():
    params = CavityQubitParams(omega_c=0.0, omega_q=0.2, g_x=1.0, kappa1=0.5, kappa2=0.5, gamma2=0.05)
    env = SingleSpinEnv(A=0.0, gamma_bx=0.0, gamma_bz=0.0, gamma_phi=0.05)
    omega = np.linspace(-2.0, 2.0, 9)
    np.testing.assert_allclose(broadened_transmission(omega, params, env), vacuum_rabi_transmission(omega, params),
                               atol=1e-12)
