# analysis/spectroscopy.py
"""
Funzionali di spettroscopia del rumore: filter function classiche e quantistiche,
decadimento della coerenza, eco di Hahn con un singolo spin ambientale, inviluppi
di Purcell, ricostruzione dello spettro transiente, trasmissione allargata e
limiti sul segnale recuperabile.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.special import roots_hermite

from analysis.cqed_analytics import CavityQubitParams
from core.exceptions import NumericalFailure, UsageError
from core.qcore import PAULI_X, PAULI_Z

logger = logging.getLogger(__name__)

MODULE = "spectroscopy"

KIND_CLASSICAL = "classical"
KIND_QUANTUM = "quantum"

HERMITE_ORDER = 64
HERMITE_MAX_ORDER = 2048
HERMITE_RTOL = 1e-8

GBAR_MIN = 1e-12

# Larghezza della finestra in frequenza (in unita' di 1/t) per le quadrature di chi e Phi_q
OMEGA_CUTOFF = 400.0
SMALL_ARGUMENT = 1e-6

SIGNAL_MODES = ("hahn", "cpmg", "pulsed", "general")


@dataclass(frozen=True)
class PulseSequence:
    """Sequenza di impulsi pi istantanei su [0, duration]."""
    duration: float
    pulse_times: Tuple[float, ...] = ()

    def __post_init__(self):
        times = tuple(float(t) for t in self.pulse_times)
        object.__setattr__(self, 'pulse_times', times)
        if self.duration <= 0:
            raise UsageError("La durata della sequenza deve essere positiva.", MODULE)
        if any(t <= 0 or t >= self.duration for t in times):
            raise UsageError("Gli impulsi devono cadere strettamente dentro (0, t).", MODULE)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise UsageError("I tempi degli impulsi devono essere strettamente crescenti.", MODULE)

    @classmethod
    def cpmg(cls, n_pulses: int, tau: float) -> 'PulseSequence':
        """Sequenza (tau/2 - pi - tau/2)^N: impulsi in (k - 1/2) tau, durata N tau."""
        if n_pulses < 1 or tau <= 0:
            raise UsageError("CPMG richiede N >= 1 e tau > 0.", MODULE)
        return cls(n_pulses * tau, tuple((k - 0.5) * tau for k in range(1, n_pulses + 1)))

    @classmethod
    def hahn(cls, tau: float) -> 'PulseSequence':
        return cls.cpmg(1, tau)

    @classmethod
    def free_induction(cls, duration: float) -> 'PulseSequence':
        return cls(duration, ())

    def sign(self, t: Union[float, np.ndarray]) -> np.ndarray:
        """Funzione di segno s(t') = (-1)^{n(t')}."""
        flips = np.searchsorted(np.asarray(self.pulse_times), np.asarray(t, dtype=float), side='right')
        return np.where(flips % 2 == 0, 1.0, -1.0)

    def segments(self, t: float) -> List[Tuple[float, float, float]]:
        """Segmenti (inizio, fine, segno) di s(t') troncati al tempo t."""
        if t > self.duration * (1 + 1e-12):
            raise UsageError(f"t = {t} supera la durata della sequenza ({self.duration}).", MODULE)
        edges = [0.0] + [p for p in self.pulse_times if p < t] + [float(t)]
        return [(a, b, (-1.0) ** k) for k, (a, b) in enumerate(zip(edges, edges[1:])) if b > a]

    def area(self, t: float) -> float:
        return float(sum(s * (b - a) for a, b, s in self.segments(t)))


def cpmg(n_pulses: int, tau: float) -> PulseSequence:
    return PulseSequence.cpmg(n_pulses, tau)


def hahn(tau: float) -> PulseSequence:
    return PulseSequence.hahn(tau)


@dataclass(frozen=True)
class NoiseSpectrum:
    """
    Spettro del rumore S(omega) = S_c(omega) + i S_q(omega).

    delta_weight rappresenta una componente quasistatica w * delta(omega) di S_c,
    integrata in forma chiusa.
    """
    s_c: Callable[[np.ndarray], np.ndarray]
    s_q: Optional[Callable[[np.ndarray], np.ndarray]] = None
    delta_weight: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.delta_weight < 0:
            raise UsageError("Il peso quasistatico deve essere non negativo.", MODULE)


def white_spectrum(level: float, s_q: Optional[Callable] = None) -> NoiseSpectrum:
    if level < 0:
        raise UsageError("Lo spettro bianco deve essere non negativo.", MODULE)
    return NoiseSpectrum(lambda w: np.full(np.shape(w), float(level)), s_q, 0.0, f"bianco({level:g})")


def quasistatic_spectrum(weight: float) -> NoiseSpectrum:
    return NoiseSpectrum(lambda w: np.zeros(np.shape(w)), None, float(weight), f"quasistatico({weight:g})")


def t2_star(s_eta: Callable[[float], float]) -> float:
    """T2* definito da 2/T2*^2 = int domega/2pi S_eta(omega)."""
    value, _ = quad(lambda w: float(s_eta(w)), -np.inf, np.inf, limit=400)
    value /= 2 * np.pi
    if not np.isfinite(value) or value <= 0:
        raise NumericalFailure("Spettro S_eta non integrabile o nullo: T2* non definito.", MODULE)
    return float(np.sqrt(2.0 / value))


# --- Filter function ---

def _phase_factor(x: np.ndarray) -> np.ndarray:
    """(e^{ix} - 1)/(ix), con la serie per argomenti piccoli."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SMALL_ARGUMENT
    safe = np.where(small, 1.0, x)
    exact = np.expm1(1j * safe) / (1j * safe)
    series = 1 + 0.5j * x - x ** 2 / 6
    return np.where(small, series, exact)


def _signed_fourier(seq: PulseSequence, omega: np.ndarray, t: float) -> np.ndarray:
    """int_0^t e^{i omega t'} s(t') dt' calcolato segmento per segmento."""
    total = np.zeros(np.shape(omega), dtype=complex)
    for a, b, s in seq.segments(t):
        total += s * (b - a) * np.exp(1j * omega * a) * _phase_factor(omega * (b - a))
    return total


def _quantum_kernel(seq: PulseSequence, omega: np.ndarray, t: float) -> np.ndarray:
    """F_q/omega^2 = sum_k s_k (cos omega a - cos omega b)/omega^2, finito in omega = 0."""
    total = np.zeros(np.shape(omega), dtype=float)
    for a, b, s in seq.segments(t):
        small = np.abs(omega) * b < SMALL_ARGUMENT
        safe = np.where(small, 1.0, omega)
        exact = 2 * np.sin(safe * (a + b) / 2) * np.sin(safe * (b - a) / 2) / safe ** 2
        total += s * np.where(small, (b ** 2 - a ** 2) / 2, exact)
    return total


def filter_function(kind: str, seq: PulseSequence, omega: Union[float, np.ndarray], t: float) -> np.ndarray:
    """
    Filter function classica o quantistica della sequenza al tempo t.

    Args:
        kind: "classical" per F_c = (omega^2/2)|int e^{i omega t'} s|^2,
              "quantum" per F_q = omega int sin(omega t') s.
        seq: La sequenza di impulsi.
        omega: Frequenza (scalare o array) in rad/s.
        t: Tempo di osservazione, t <= durata della sequenza.

    Returns:
        Array reale con la stessa forma di omega.
    """
    omega = np.asarray(omega, dtype=float)
    segments = seq.segments(t)
    if kind == KIND_CLASSICAL:
        # omega * int e^{i omega t'} s = -i sum_k s_k (e^{i omega b} - e^{i omega a})
        total = np.zeros(np.shape(omega), dtype=complex)
        for a, b, s in segments:
            total += s * (np.exp(1j * omega * b) - np.exp(1j * omega * a))
        return 0.5 * np.abs(total) ** 2
    if kind == KIND_QUANTUM:
        total = np.zeros(np.shape(omega), dtype=float)
        for a, b, s in segments:
            total += s * (np.cos(omega * a) - np.cos(omega * b))
        return total
    raise UsageError(f"Tipo di filter function sconosciuto: '{kind}'", MODULE)


def _oscillation_weight(seq: PulseSequence, t: float) -> float:
    """Somma dei |c_j|^2 dei coefficienti di e^{i omega t_j} in omega * int e^{i omega t'} s."""
    coefficients: Dict[float, float] = {}
    for a, b, s in seq.segments(t):
        coefficients[b] = coefficients.get(b, 0.0) + s
        coefficients[a] = coefficients.get(a, 0.0) - s
    return float(sum(c ** 2 for c in coefficients.values()))


def _frequency_integral(integrand: Callable[[float], float], t: float, cutoff: float) -> float:
    """Integra su [-W, W] a blocchi di larghezza pi/t."""
    width = np.pi / t
    edges = np.arange(-cutoff, cutoff + width / 2, width)
    total = 0.0
    for a, b in zip(edges, edges[1:]):
        value, _ = quad(integrand, a, b, limit=200)
        total += value
    return total


def coherence_functional(seq: PulseSequence, spectrum: NoiseSpectrum, t: float,
                         cutoff: Optional[float] = None) -> Tuple[float, float]:
    """
    Calcola chi(t) e la fase di rumore quantistico Phi_q(t).

    chi = int domega/2pi F_c S_c/omega^2 e Phi_q = int domega/2pi F_q S_q/omega^2.
    La coda oltre la finestra |omega| > W e' aggiunta con la media delle oscillazioni.

    Returns:
        (chi, phi_q)
    """
    if t <= 0:
        raise UsageError("Il tempo deve essere positivo.", MODULE)
    window = (cutoff if cutoff is not None else OMEGA_CUTOFF) / t

    def spectral(fn, w):
        value = np.asarray(fn(np.asarray(w, dtype=float)), dtype=float)
        if not np.all(np.isfinite(value)):
            raise NumericalFailure(f"Lo spettro non e' finito in omega = {w}", MODULE)
        return value

    def classical_integrand(w):
        kernel = 0.5 * np.abs(_signed_fourier(seq, np.array([w]), t)[0]) ** 2
        return float(kernel * spectral(spectrum.s_c, w))

    logger.debug("Integro chi(t) per t = %.3e s su |omega| < %.3e", t, window)
    chi = _frequency_integral(classical_integrand, t, window)
    tail_level = float(spectral(spectrum.s_c, window) + spectral(spectrum.s_c, -window))
    chi += 0.5 * _oscillation_weight(seq, t) * tail_level / window
    chi /= 2 * np.pi
    if spectrum.delta_weight:
        chi += spectrum.delta_weight / (2 * np.pi) * 0.5 * seq.area(t) ** 2
    if not np.isfinite(chi):
        raise NumericalFailure("Spettro non integrabile: chi(t) non finito.", MODULE, t)

    phi_q = 0.0
    if spectrum.s_q is not None:
        if abs(seq.area(t)) > 1e-9 * t:
            logger.warning("Calcolo Phi_q con int s != 0: la forma CPMG non e' garantita.")

        def quantum_integrand(w):
            return float(_quantum_kernel(seq, np.array([w]), t)[0] * spectral(spectrum.s_q, w))

        phi_q = _frequency_integral(quantum_integrand, t, window) / (2 * np.pi)
        if not np.isfinite(phi_q):
            raise NumericalFailure("Spettro quantistico non integrabile: Phi_q non finito.", MODULE, t)
    return float(max(chi, 0.0)), float(phi_q)


# --- Eco di Hahn con un singolo spin ---

@dataclass(frozen=True)
class SingleSpinEnv:
    """Ambiente di un singolo spin nucleare: iperfine A e campo (gamma B_x, gamma B_z)."""
    A: float
    gamma_bx: float
    gamma_bz: float
    gamma_phi: float = 0.0

    @property
    def omega_plus(self) -> float:
        return 0.5 * float(np.hypot(self.gamma_bx, self.gamma_bz + self.A / 2))

    @property
    def omega_minus(self) -> float:
        return 0.5 * float(np.hypot(self.gamma_bx, self.gamma_bz - self.A / 2))

    @property
    def phi_plus(self) -> float:
        return _mixing_angle(2 * self.gamma_bx, self.gamma_bz + self.A)

    @property
    def phi_minus(self) -> float:
        return _mixing_angle(2 * self.gamma_bx, self.gamma_bz - self.A)

    @property
    def delta_phi(self) -> float:
        return self.phi_plus - self.phi_minus

    @property
    def visibility(self) -> float:
        return float(np.sin(self.delta_phi) ** 2)

    def hamiltonian(self, qubit_sign: int) -> np.ndarray:
        """H_sigma = sigma A I_z / 2 + gamma (B_x I_x + B_z I_z), sigma = +1 (e) o -1 (g)."""
        ix, iz = PAULI_X / 2, PAULI_Z / 2
        return qubit_sign * 0.5 * self.A * iz + self.gamma_bx * ix + self.gamma_bz * iz


def _mixing_angle(numerator: float, denominator: float) -> float:
    if denominator == 0:
        return float(np.sign(numerator) * np.pi / 2)
    return float(np.arctan(numerator / denominator))


def single_spin_echo(tau: Union[float, np.ndarray], env: SingleSpinEnv) -> np.ndarray:
    """Ampiezza dell'eco di Hahn C(tau) per un qubit accoppiato a un singolo spin."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise UsageError("Il tempo di eco deve essere positivo.", MODULE)
    modulation = (2 * np.sin(env.delta_phi) ** 2
                  * np.sin(env.omega_plus * tau / 4) ** 2
                  * np.sin(env.omega_minus * tau / 4) ** 2)
    return np.exp(-env.gamma_phi * tau) * (1 - modulation) + 0j


# --- Inviluppi di Purcell ---

@dataclass(frozen=True)
class PurcellParams:
    g: float
    kappa: float
    t2_star: float
    tau: float
    delta: float = 0.0
    n_pulses: int = 1

    def __post_init__(self):
        if self.g < 0 or self.kappa <= 0:
            raise UsageError("Servono g >= 0 e kappa > 0.", MODULE)
        if self.t2_star <= 0 or self.tau <= 0:
            raise UsageError("T2* e tau devono essere positivi.", MODULE)

    @property
    def gamma_p(self) -> float:
        return (self.g * self.t2_star) ** 2 * self.kappa / 2

    def purcell_rate(self, eta: np.ndarray) -> np.ndarray:
        return self.g ** 2 * self.kappa / ((eta - self.delta) ** 2 + (self.kappa / 2) ** 2)


def gaussian_eta_average(fn: Callable[[np.ndarray], np.ndarray], t2_star: float,
                         order: int = HERMITE_ORDER) -> Tuple[Any, int, bool]:
    """
    Media su eta con peso (T2*/sqrt(4 pi)) e^{-eta^2 T2*^2/4} (<<eta^2>> = 2/T2*^2).

    Uso Gauss-Hermite raddoppiando l'ordine finche' la variazione relativa
    scende sotto 1e-8.

    Returns:
        (media, ordine usato, convergenza raggiunta)
    """
    previous = None
    while order <= HERMITE_MAX_ORDER:
        nodes, weights = roots_hermite(order)
        values = np.asarray(fn(2 * nodes / t2_star))
        value = np.tensordot(weights, values, axes=1) / np.sqrt(np.pi)
        if previous is not None:
            change = np.max(np.abs(value - previous))
            if change <= HERMITE_RTOL * max(float(np.max(np.abs(value))), 1e-300):
                return value, order, True
        previous = value
        order *= 2
    logger.warning("Quadratura di Gauss-Hermite non convergente fino all'ordine %d.", HERMITE_MAX_ORDER)
    return previous, HERMITE_MAX_ORDER, False


def purcell_envelope(n: int, p: PurcellParams) -> Dict[str, Any]:
    """
    Inviluppo di eco con decadimento di Purcell dipendente da eta.

    Returns:
        Dizionario con "exact" (media E_n), "asymptote", "g_bar" (rami asintotici),
        "g_bar_exact" (integrale di G_n), "G_n" (valutatore di G_n(t)),
        "G_n_asymptotic" e "regime".
    """
    if n < 0:
        raise UsageError("L'indice dell'eco deve essere n >= 0.", MODULE)
    exposure = n * p.tau / 2
    gp_nt = p.gamma_p * n * p.tau
    if p.kappa * p.t2_star >= 1:
        logger.warning("kappa T2* = %.3f >= 1: le forme asintotiche non sono affidabili.", p.kappa * p.t2_star)

    exact, order, converged = gaussian_eta_average(lambda eta: np.exp(-p.purcell_rate(eta) * exposure), p.t2_star)
    asymptote = np.exp((p.kappa * p.t2_star / 4) ** 2) * np.exp(-np.sqrt(gp_nt))
    prefactor = np.exp(np.sqrt(gp_nt))

    def g_n(t: Union[float, np.ndarray]) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        value, _, _ = gaussian_eta_average(
            lambda eta: np.exp(-p.purcell_rate(eta)[:, None] * exposure - 1j * np.outer(eta, t)), p.t2_star)
        return prefactor * value

    def g_n_asymptotic(t: Union[float, np.ndarray]) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if gp_nt < 1:
            return np.exp(-(t / p.t2_star) ** 2)
        return np.exp(-(t / (2 * p.t2_star)) ** 2) * np.cos(np.sqrt(2) * gp_nt ** 0.25 * t / p.t2_star)

    if gp_nt < 1:
        regime, g_bar = "short", 1.0
    else:
        regime, g_bar = "long", 2 * np.exp(-2 * np.sqrt(gp_nt))
    if 0.1 < gp_nt < 10:
        regime = "crossover"

    return {
        "n": n,
        "exact": float(np.real(exact)),
        "asymptote": float(asymptote),
        "g_bar": float(g_bar),
        # G_n(t) integrato: solo la componente eta = 0 sopravvive
        "g_bar_exact": float(prefactor * np.exp(-p.purcell_rate(np.array(0.0)) * exposure)),
        "G_n": g_n,
        "G_n_asymptotic": g_n_asymptotic,
        "gamma_p_n_tau": gp_nt,
        "regime": regime,
        "quadrature_order": order,
        "converged": converged,
    }


# --- Spettro transiente ---

class TransientSpectrum:
    """
    Mappa tra l'inviluppo di eco C(n tau) e il campo di cavita' <a>_{omega=delta}.

    La somma e' la trasformata di Fourier discreta di e^{i n delta_Delta tau} G_n K^n C(n tau),
    dove K coniuga gli indici dispari.
    """

    def __init__(self, g_bar: Sequence[float], Delta: float, tau: float, kappa: float,
                 g: float, t2_star: float, sigma_x0: float = 1.0):
        if tau <= 0 or kappa <= 0:
            raise UsageError("tau e kappa devono essere positivi.", MODULE)
        self.g_bar = np.asarray(g_bar, dtype=float)
        self.tau = float(tau)
        self.Delta = float(Delta)
        self.delta_Delta = self._reduced_detuning(Delta, tau)
        self.prefactor = -1j * sigma_x0 * np.sqrt(np.pi) * g * t2_star / kappa
        if kappa * t2_star >= 1:
            logger.warning("kappa T2* = %.3f: l'approssimazione a delta di G_n non e' garantita.", kappa * t2_star)

    @staticmethod
    def _reduced_detuning(Delta: float, tau: float) -> float:
        period = 2 * np.pi / tau
        reduced = float(np.mod(Delta, period))
        # tau = 2 pi m / Delta: nessuna correzione di fase
        if min(reduced, period - reduced) <= 1e-12 * period:
            return 0.0
        return reduced

    @property
    def n_echoes(self) -> int:
        return len(self.g_bar) - 1

    def _coefficients(self, envelope: Sequence[complex]) -> np.ndarray:
        envelope = np.asarray(envelope, dtype=complex)
        if envelope.shape != self.g_bar.shape:
            raise UsageError("Inviluppo e G_n devono avere la stessa lunghezza (n = 0..N).", MODULE)
        n = np.arange(len(envelope))
        conjugated = np.where(n % 2 == 1, np.conj(envelope), envelope)
        return np.exp(1j * n * self.delta_Delta * self.tau) * self.g_bar * conjugated

    def dft(self, envelope: Sequence[complex], delta: Union[float, np.ndarray]) -> np.ndarray:
        """C_{N,tau}(delta)."""
        coefficients = self._coefficients(envelope)
        n = np.arange(len(coefficients))
        phases = np.exp(1j * np.outer(np.atleast_1d(delta), n) * self.tau)
        return phases @ coefficients

    def field(self, envelope: Sequence[complex], delta: Union[float, np.ndarray]) -> np.ndarray:
        """<a>_{omega=delta} = prefattore * [C_{N,tau}(delta) - 1/2]."""
        return self.prefactor * (self.dft(envelope, delta) - 0.5)

    def sweep_detunings(self) -> np.ndarray:
        """Detuning delta_k = 2 pi k / ((N+1) tau) su una finestra 2 pi/tau."""
        size = len(self.g_bar)
        return 2 * np.pi * np.arange(size) / (size * self.tau)

    def reconstruct(self, samples: Sequence[complex]) -> np.ndarray:
        """Ricostruisce C(n tau) dal campo campionato su sweep_detunings()."""
        samples = np.asarray(samples, dtype=complex)
        if samples.shape != self.g_bar.shape:
            raise UsageError("Servono N+1 campioni sulla griglia di sweep.", MODULE)
        if np.any(np.abs(self.g_bar) < GBAR_MIN):
            raise NumericalFailure("Inversione mal condizionata: G_n sotto 1e-12.", MODULE)
        dft_values = samples / self.prefactor + 0.5
        coefficients = np.fft.fft(dft_values) / len(samples)
        n = np.arange(len(samples))
        coefficients = coefficients / self.g_bar * np.exp(-1j * n * self.delta_Delta * self.tau)
        return np.where(n % 2 == 1, np.conj(coefficients), coefficients)


def transient_spectrum(envelope: Sequence[complex], g_bar: Sequence[float], Delta: float, tau: float,
                       kappa: float, g: float, t2_star: float,
                       sigma_x0: float = 1.0) -> Tuple[Callable[[Any], np.ndarray], Callable[[Sequence[complex]], np.ndarray]]:
    """
    Returns:
        (valutatore di <a>_{omega=delta} per l'inviluppo dato, ricostruzione inversa)
    """
    spectrum = TransientSpectrum(g_bar, Delta, tau, kappa, g, t2_star, sigma_x0)
    return (lambda delta: spectrum.field(envelope, delta)), spectrum.reconstruct


# --- Limiti sul segnale ---

def signal_bound(mode: str, kappa: float, kappa2: float, g: Optional[float] = None,
                 t2_star: Optional[float] = None, tau: Optional[float] = None,
                 revivals: Optional[Sequence[complex]] = None, t_on: Optional[float] = None,
                 sigma_x0: float = 1.0) -> float:
    """
    Segnale recuperabile per ciclo S.

    Args:
        mode: "hahn", "cpmg", "pulsed" oppure "general".
        revivals: Per "general", la sequenza G_n C(n tau) per n = 1..N.
        t_on: Per "pulsed", la finestra di accensione di g(t); senza t_on
              restituisco il limite S_max = sqrt(kappa2/kappa).
    """
    if mode not in SIGNAL_MODES:
        raise UsageError(f"Modalita' di segnale sconosciuta: '{mode}'", MODULE)
    if kappa <= 0 or kappa2 < 0 or kappa2 > kappa:
        raise UsageError("Servono kappa > 0 e 0 <= kappa2 <= kappa.", MODULE)
    ratio = kappa2 / kappa

    def need(**values):
        missing = [name for name, v in values.items() if v is None]
        if missing:
            raise UsageError(f"Parametri mancanti per la modalita' '{mode}': {', '.join(missing)}", MODULE)

    if mode == "hahn":
        need(g=g, t2_star=t2_star)
        value = np.sqrt(5 * np.pi) / 2 * g * t2_star * np.sqrt(ratio)
    elif mode == "cpmg":
        need(tau=tau)
        value = 2 * np.sqrt(np.pi) / 3 * np.sqrt(ratio / (kappa * tau))
    elif mode == "pulsed":
        if t_on is None:
            value = np.sqrt(ratio)
        else:
            need(g=g)
            x = (g * t_on) ** 2
            value = np.sqrt(ratio * x * (0.25 + (1 - x) / x)) if x > 0 else 0.0
    else:
        need(g=g, t2_star=t2_star, revivals=revivals)
        n_eff = 0.25 + float(np.sum(np.abs(np.asarray(revivals, dtype=complex)) ** 2))
        value = np.sqrt(abs(sigma_x0) ** 2 * np.pi * (g * t2_star) ** 2 * ratio * n_eff)

    if value > 1:
        logger.warning("S = %.3f fuori dal regime di validita' (%s): lo limito a 1.", value, mode)
    return float(min(max(value, 0.0), 1.0))


def cpmg_signal_asymptote(p: PurcellParams, kappa2: float) -> Dict[str, float]:
    """Stima N_eff ~ 2/(9 gamma_P tau) e il limite S_CPMG corrispondente."""
    n_eff = 2.0 / (9 * p.gamma_p * p.tau)
    bound = np.sqrt(np.pi * (p.g * p.t2_star) ** 2 * (kappa2 / p.kappa) * n_eff)
    return {
        "n_eff": float(n_eff),
        "signal": float(bound),
        "closed_form": signal_bound("cpmg", p.kappa, kappa2, tau=p.tau),
    }


# --- Trasmissione allargata ---

def spin_susceptibility(omega: np.ndarray, eta: np.ndarray, qubit_splitting: float, env: SingleSpinEnv,
                        populations: Optional[Dict[str, Sequence[float]]] = None) -> np.ndarray:
    """
    Suscettivita' chi_eta(omega) del qubit vestito dallo spin ambientale.

    Returns:
        Array di forma (len(eta), len(omega)).
    """
    energies_g, states_g = np.linalg.eigh(env.hamiltonian(-1))
    energies_e, states_e = np.linalg.eigh(env.hamiltonian(+1))
    overlaps = np.abs(states_g.conj().T @ states_e) ** 2  # [m, n] = |<g,m|e,n>|^2
    if populations is None:
        # Temperatura infinita per lo spin, qubit in |g>
        p_g, p_e = np.full(2, 0.5), np.zeros(2)
    else:
        p_g = np.asarray(populations.get("g", np.full(2, 0.5)), dtype=float)
        p_e = np.asarray(populations.get("e", np.zeros(2)), dtype=float)

    omega = np.atleast_1d(omega)[None, :]
    eta = np.atleast_1d(eta)[:, None]
    chi = np.zeros((eta.shape[0], omega.shape[1]), dtype=complex)
    for m in range(2):
        for n in range(2):
            weight = (p_e[n] - p_g[m]) * overlaps[m, n]
            if weight == 0:
                continue
            shift = energies_g[m] - energies_e[n]
            chi += 1j * weight / (1j * (qubit_splitting - omega + eta - shift) + env.gamma_phi)
    return chi


def broadened_transmission(omega: Union[float, np.ndarray], params: CavityQubitParams, env: SingleSpinEnv,
                           t2_star: Optional[float] = None,
                           populations: Optional[Dict[str, Sequence[float]]] = None) -> np.ndarray:
    """
    Trasmissione A_T(omega) mediata sulla distribuzione gaussiana di eta.

    Con t2_star None (distribuzione a delta) restituisco la trasmissione non mediata.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    coupling = -np.sqrt(params.kappa1 * params.kappa2)

    def amplitude(eta):
        chi = spin_susceptibility(omega, eta, params.omega_q, env, populations)
        denominator = 1j * (params.omega_c - omega)[None, :] + 1j * params.g_x ** 2 * chi + params.kappa / 2
        return coupling / denominator

    if t2_star is None or np.isinf(t2_star):
        return amplitude(np.array([0.0]))[0]
    logger.debug("Medio A_T su eta con T2* = %.3e s", t2_star)
    value, _, _ = gaussian_eta_average(amplitude, t2_star)
    return value
