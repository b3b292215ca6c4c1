# analysis/cqed_analytics.py
"""
Formule chiuse di cavity-QED: doppietti di Jaynes-Cummings, trasmissione di
vacuum Rabi, riflessione dispersiva, traiettorie con accoppiamento longitudinale,
scattering which-path, concorrenza QWP e accoppiamenti flopping-mode.
"""
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.special import erf, erfc, erfcx

from core.dynamics import Envelope, Waveform
from core.exceptions import UsageError
from core.qcore import DensityOp

logger = logging.getLogger(__name__)

MODULE = "cqed_analytics"

# Convenzioni per la trasmissione: "derived" elimina <sigma_-> dalle equazioni
# di Langevin, "printed" riproduce il segno del termine g^2 come stampato.
CONVENTION_DERIVED = "derived"
CONVENTION_PRINTED = "printed"

# Peso delta della componente rho_- nello stato X post-misura
XSTATE_MIXING = {
    "closed-form": "delta = erfc(sqrt(N_eta))",
    "mixture": "delta = erfc(sqrt(N_eta)) / 2",
}

FREQUENCY_WINDOW = 12.0


@dataclass(frozen=True)
class CavityQubitParams:
    """Parametri di una cavita' accoppiata a un qubit. Tutte le frequenze in rad/s."""
    omega_c: float = 0.0
    omega_q: float = 0.0
    g_x: float = 0.0
    kappa1: float = 0.0
    kappa2: float = 0.0
    kappa_int: float = 0.0
    gamma2: float = 0.0
    chi: float = 0.0
    kappa: Optional[float] = None

    def __post_init__(self):
        rates = (self.kappa1, self.kappa2, self.kappa_int, self.gamma2)
        if any(r < 0 for r in rates):
            raise UsageError("I rate di decadimento devono essere non negativi.", MODULE)
        total = self.kappa1 + self.kappa2 + self.kappa_int
        if self.kappa is None:
            object.__setattr__(self, 'kappa', total)
        elif abs(self.kappa - total) > 1e-12 * max(abs(total), 1e-300):
            raise UsageError(f"kappa = {self.kappa} diverso da kappa1 + kappa2 + kappa_int = {total}", MODULE)

    @property
    def delta(self) -> float:
        return self.omega_q - self.omega_c


@dataclass(frozen=True)
class FloppingModeParams:
    epsilon: float
    delta_bz: float
    omega_bar: float
    g_c: float

    def __post_init__(self):
        if self.omega_bar <= 0:
            raise UsageError("Lo splitting di tunnel medio deve essere positivo.", MODULE)


# --- Scala di Jaynes-Cummings e trasmissione ---

def jc_doublet(n: int, delta: float, g: float, omega_c: float = 0.0) -> Dict[str, Any]:
    """
    Autovalori e autostati del doppietto n-esimo di Jaynes-Cummings
    nella base {|e,n>, |g,n+1>}.

    Returns:
        Dizionario con lambda_plus, lambda_minus, theta e i coefficienti
        degli stati vestiti (righe: |+,n>, |-,n>).
    """
    if n < 0:
        raise UsageError("L'indice del doppietto deve essere n >= 0.", MODULE)
    coupling = 2.0 * g * np.sqrt(n + 1)
    root = np.sqrt(delta ** 2 + coupling ** 2)
    center = omega_c * (n + 0.5)
    theta = 0.5 * np.arctan2(coupling, delta)
    c, s = np.cos(theta), np.sin(theta)
    return {
        "lambda_plus": center + 0.5 * root,
        "lambda_minus": center - 0.5 * root,
        "theta": float(theta),
        "dressed": np.array([[c, s], [-s, c]]),
    }


def langevin_steady_state(omega: float, p: CavityQubitParams) -> Tuple[complex, complex]:
    """
    Risolve in frequenza le equazioni di Langevin lineari per <a> e <sigma_->
    con <a sigma_z> = -<a> e ingresso unitario.

    Returns:
        (<a>_omega, <sigma_->_omega)
    """
    matrix = np.array([
        [1j * (p.omega_c - omega) + p.kappa / 2, 1j * p.g_x],
        [1j * p.g_x, 1j * (p.omega_q - omega) + p.gamma2],
    ], dtype=complex)
    rhs = np.array([-np.sqrt(p.kappa1), 0.0], dtype=complex)
    a, sigma = np.linalg.solve(matrix, rhs)
    return complex(a), complex(sigma)


def vacuum_rabi_transmission(omega: Union[float, np.ndarray], p: CavityQubitParams,
                             convention: str = CONVENTION_DERIVED) -> Union[complex, np.ndarray]:
    """
    Ampiezza di trasmissione T(omega) del sistema cavita'-qubit.

    La forma "derived" ha il denominatore (omega_c - omega - i k/2)(omega_q - omega - i g2) - g^2,
    coerente con la soluzione stazionaria delle equazioni di Langevin (picchi in omega_c +/- g).
    """
    if p.kappa <= 0:
        raise UsageError("vacuum_rabi_transmission richiede kappa > 0.", MODULE)
    omega = np.asarray(omega, dtype=float)
    qubit = p.omega_q - omega - 1j * p.gamma2
    cavity = p.omega_c - omega - 1j * p.kappa / 2
    sign = -1.0 if convention == CONVENTION_DERIVED else 1.0
    if convention not in (CONVENTION_DERIVED, CONVENTION_PRINTED):
        raise UsageError(f"Convenzione sconosciuta: {convention}", MODULE)
    result = 1j * np.sqrt(p.kappa1 * p.kappa2) * qubit / (cavity * qubit + sign * p.g_x ** 2)
    return complex(result) if result.ndim == 0 else result


def dispersive_reflection(omega: Union[float, np.ndarray], omega_c: float, chi: float,
                          kappa0: float, kappa_int: float, s: int) -> Tuple[Any, Any]:
    """
    Coefficiente di riflessione condizionato dallo stato del qubit (s = +1 o -1)
    e la sua fase phi_s = arg R.
    """
    if kappa0 <= 0:
        raise UsageError("dispersive_reflection richiede kappa0 > 0.", MODULE)
    if s not in (1, -1):
        raise UsageError("Lo stato del qubit deve essere s = +1 oppure s = -1.", MODULE)
    detuning = 2j * (np.asarray(omega, dtype=float) - omega_c - s * chi)
    r = (detuning + kappa0 - kappa_int) / (detuning - kappa0 - kappa_int)
    return r, np.angle(r)


def dispersive_phase(chi: float, kappa: float, s: int) -> float:
    """Fase a centro riga phi_s = pi - 2 arctan(2 s chi / kappa), con tan phi_s = 4 kappa chi s / (4 chi^2 - kappa^2)."""
    phase = np.pi - 2.0 * np.arctan(2.0 * s * chi / kappa)
    return float(np.angle(np.exp(1j * phase)))


def qwp_reflection(omega: Union[float, np.ndarray], chi: float, kappa: float, z: int) -> Any:
    """Riflessione dispersiva per la variante which-path con qubit z = +/-1."""
    detuning = 1j * (z * chi - np.asarray(omega, dtype=float))
    return (detuning - kappa / 2) / (detuning + kappa / 2)


def longitudinal_trajectory(grid: Sequence[float], g_z: Union[Envelope, np.ndarray],
                            omega_c: float, kappa: float, s: int) -> np.ndarray:
    """
    Ampiezza di cavita' nel riferimento rotante per accoppiamento longitudinale:
    <a>_t = -i s int_0^t exp(-k (t - t')/2) exp(i omega_c t') g_z(t') dt'.

    La quadratura e' ricorsiva sul passo di griglia (trapezi con fattore di
    decadimento esatto), stabile anche per k t grandi.
    """
    grid = np.asarray(grid, dtype=float)
    if isinstance(g_z, Envelope):
        if g_z.grid.shape == grid.shape and np.allclose(g_z.grid, grid):
            samples = g_z.samples
        else:
            samples = np.array([g_z(t) for t in grid])
    else:
        samples = np.asarray(g_z, dtype=complex)
    source = np.exp(1j * omega_c * grid) * samples
    out = np.zeros(grid.size, dtype=complex)
    for k in range(1, grid.size):
        dt = grid[k] - grid[k - 1]
        decay = np.exp(-kappa * dt / 2)
        out[k] = decay * out[k - 1] + 0.5 * dt * (decay * source[k - 1] + source[k])
    return -1j * s * out


# --- Scattering which-path ---

def gaussian_spectral_density(tau: float) -> Callable[[float], float]:
    """|u(omega)|^2 = 2 sqrt(pi) tau exp(-omega^2 tau^2) per un impulso gaussiano."""
    return lambda w: 2.0 * np.sqrt(np.pi) * tau * np.exp(-(w * tau) ** 2)


def waveform_spectrum(u: Waveform, padding: int = 8) -> Tuple[np.ndarray, np.ndarray]:
    """Restituisce (omega, |u(omega)|^2) tramite FFT con zero-padding."""
    n = u.samples.size * padding
    spectrum = np.fft.fft(u.samples, n=n) * u.dt
    omega = 2 * np.pi * np.fft.fftfreq(n, d=u.dt)
    return omega, np.abs(spectrum) ** 2


def n_max(g_max: float, tau: float) -> float:
    """Limite sul numero di fotoni N << (g_max tau)^(8/5)."""
    return float((g_max * tau) ** 1.6)


def bandwidth_fidelity(alpha0: complex, alpha10: complex, alpha20: complex) -> float:
    """
    Fedelta' di banda del QWP; l'esponente e^{-alpha0* alpha20} riproduce il
    limite gaussiano 1 - 4|alpha0|^2/(k tau)^4.
    """
    overlap = (np.exp(-0.5 * abs(alpha0) ** 2) * np.exp(-np.conj(alpha0) * alpha20)
               * np.exp(-0.5 * abs(alpha10) ** 2) * np.exp(-0.5 * abs(alpha20) ** 2))
    return float(0.25 * abs(1.0 + overlap) ** 2)


def whichpath_scattering(u: Union[Waveform, Callable[[float], float]], alpha0: complex,
                         kappa1: float, kappa2: float, s: int = 0,
                         tau: Optional[float] = None,
                         exact_which_path: bool = False) -> Dict[str, Any]:
    """
    Scattering which-path con drive longitudinale adattato.

    Args:
        u: Forma d'onda d'ingresso, oppure la densita' spettrale |u(omega)|^2.
        alpha0: Ampiezza coerente d'ingresso.
        kappa1, kappa2: Rate delle due porte.
        s: Stato del qubit (0 o 1) per T(omega) e R(omega).
        tau: Durata dell'impulso, usata per N_max e per il limite gaussiano.
        exact_which_path: Se True richiede kappa1 = kappa2 e lo segnala altrimenti.

    Returns:
        Dizionario con T, R (funzioni), le ampiezze alpha_{is}, la fedelta' F
        e N_max.
    """
    if s not in (0, 1):
        raise UsageError("Lo stato del qubit deve essere s = 0 oppure s = 1.", MODULE)
    if kappa1 <= 0 or kappa2 <= 0:
        raise UsageError("whichpath_scattering richiede kappa1, kappa2 > 0.", MODULE)
    warnings = []
    if exact_which_path and not np.isclose(kappa1, kappa2, rtol=1e-12):
        msg = "Which-path esatto richiede kappa1 = kappa2 = kappa/2: risultato approssimato."
        logger.warning(msg)
        warnings.append(msg)

    kappa = kappa1 + kappa2

    def transmission(w, s_value=s):
        return (1 - s_value) * np.sqrt(kappa1 * kappa2) / (1j * np.asarray(w) - kappa / 2)

    def reflection(w, s_value=s):
        return 1.0 + np.sqrt(kappa1 / kappa2) * transmission(w, s_value)

    # Ampiezze stazionarie: proiezione del campo uscente sul modo d'ingresso
    if isinstance(u, Waveform):
        omega, density = waveform_spectrum(u)
        d_omega = omega[1] - omega[0]
        alpha10 = alpha0 * np.sum(density * reflection(omega, 0)) * d_omega / (2 * np.pi)
        alpha20 = alpha0 * np.sum(density * transmission(omega, 0)) * d_omega / (2 * np.pi)
        g_max = np.sqrt(kappa1) * abs(alpha0) * np.max(np.abs(u.samples))
    else:
        width = FREQUENCY_WINDOW / tau if tau else np.inf

        def project(fn):
            re = quad(lambda w: u(w) * np.real(fn(w, 0)), -width, width, limit=400)[0]
            im = quad(lambda w: u(w) * np.imag(fn(w, 0)), -width, width, limit=400)[0]
            return (re + 1j * im) / (2 * np.pi)

        alpha10 = alpha0 * project(reflection)
        alpha20 = alpha0 * project(transmission)
        g_max = None

    result = {
        "T": transmission,
        "R": reflection,
        "alpha": {(1, 0): complex(alpha10), (2, 0): complex(alpha20),
                  (1, 1): complex(alpha0), (2, 1): 0.0j},
        "fidelity": bandwidth_fidelity(alpha0, alpha10, alpha20),
        "warnings": warnings,
    }
    if tau is not None:
        result["fidelity_gaussian_limit"] = 1.0 - 4.0 * abs(alpha0) ** 2 / (kappa * tau) ** 4
        if g_max is not None:
            result["g_max"] = float(g_max)
            result["n_max"] = n_max(g_max, tau)
    return result


def gaussian_whichpath_amplitudes(alpha0: complex, kappa: float, tau: float) -> Tuple[complex, complex]:
    """Forma chiusa per l'impulso gaussiano con kappa1 = kappa2: alpha10 = alpha0 (1 - x), alpha20 = -alpha0 x."""
    y = kappa * tau / 2
    x = np.sqrt(np.pi) * y * erfcx(y)
    return alpha0 * (1.0 - x), -alpha0 * x


def whichpath_source_noise_fidelity(mean_sq_delta_alpha: float) -> float:
    """Fattore di fedelta' exp(-<|delta alpha|^2>) dovuto al rumore della sorgente."""
    if mean_sq_delta_alpha < 0:
        raise UsageError("<|delta alpha|^2> deve essere non negativo.", MODULE)
    return float(np.exp(-mean_sq_delta_alpha))


# --- Concorrenza del QWP ---

def _check_qwp_inputs(N: float, p: float, eta: float, chi_xi: float):
    if N < 0 or chi_xi < 0 or not 0 <= p <= 1 or not 0 <= eta <= 1:
        raise UsageError("Parametri QWP fuori intervallo (N >= 0, p, eta in [0,1], chi >= 0).", MODULE)


def qwp_concurrence(N: float, p: float, eta: float = 1.0, chi_xi: float = 0.0) -> float:
    """C = max{0, erf(sqrt(N_eta)) e^{-N_p - chi} - erfc(sqrt(N_eta))}."""
    _check_qwp_inputs(N, p, eta, chi_xi)
    n_eta = eta * (1 - p) * N
    n_p = p * N
    root = np.sqrt(n_eta)
    return float(max(0.0, erf(root) * np.exp(-n_p - chi_xi) - erfc(root)))


def qwp_xstate(N: float, p: float, eta: float = 1.0, chi_xi: float = 0.0,
               convention: str = "closed-form") -> DensityOp:
    """
    Stato X post-misura (1 - delta) rho_+ + delta rho_-.

    Con convention="closed-form" delta = erfc(sqrt(N_eta)), che riproduce
    esattamente qwp_concurrence; con "mixture" delta = erfc(sqrt(N_eta))/2.
    """
    _check_qwp_inputs(N, p, eta, chi_xi)
    coherence = np.exp(-p * N - chi_xi)
    tail = erfc(np.sqrt(eta * (1 - p) * N))
    if convention not in XSTATE_MIXING:
        raise UsageError(f"Convenzione sconosciuta per lo stato X: {convention}", MODULE)
    delta = tail if convention == "closed-form" else tail / 2
    rho_plus = 0.5 * np.array([[1, 0, 0, coherence],
                               [0, 0, 0, 0],
                               [0, 0, 0, 0],
                               [coherence, 0, 0, 1]], dtype=complex)
    rho_minus = 0.5 * np.array([[0, 0, 0, 0],
                                [0, 1, coherence, 0],
                                [0, coherence, 1, 0],
                                [0, 0, 0, 0]], dtype=complex)
    return DensityOp((2, 2), (1 - delta) * rho_plus + delta * rho_minus)


# --- Accoppiamenti flopping-mode ---

def flopping_mode_couplings(p: FloppingModeParams, delta_omega: Union[float, np.ndarray] = 0.0) -> Dict[str, np.ndarray]:
    """
    Accoppiamenti g0(t), g1(t) per Omega(t) = Omega_bar + delta_Omega(t) e la
    loro linearizzazione delta g1 = (g_c Delta b_z / Omega_bar^2) delta_Omega.
    """
    omega = p.omega_bar + np.asarray(delta_omega, dtype=float)
    if np.any(omega <= 0):
        raise UsageError("Lo splitting di tunnel Omega(t) deve restare positivo.", MODULE)

    def coupling(detuning):
        return 0.5 * p.g_c * (1.0 + detuning / np.sqrt(detuning ** 2 + omega ** 2))

    g0 = coupling(p.epsilon + p.delta_bz)
    g1 = coupling(p.epsilon - p.delta_bz)
    dg1 = p.g_c * p.delta_bz / p.omega_bar ** 2 * np.asarray(delta_omega, dtype=float)
    return {"g0": g0, "g1": g1, "delta_g1_linear": dg1}
