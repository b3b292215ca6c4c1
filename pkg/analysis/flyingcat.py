# analysis/flyingcat.py
"""
Parity check a tre qubit con impulsi coerenti volanti ("flying cat"): canale
di perdita, misura homodyne della parita', compromesso tra errori, preparazione
di stati GHZ e stime di fattibilita' in circuit QED.
"""
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from scipy.special import erfc, gammaln
from scipy.stats import binom

from analysis.cqed_analytics import FREQUENCY_WINDOW, dispersive_reflection, waveform_spectrum
from core.dynamics import Waveform
from core.exceptions import DimensionError, UsageError
from core.qcore import HADAMARD, DensityOp, PureState, ket, pauli_word

logger = logging.getLogger(__name__)

MODULE = "flyingcat"

BASIS_Z = "Z"
BASIS_X = "X"

ALPHA_BRACKET = (0.1, 10.0)
GOLDEN_TOL = 1e-6

# Termine di perdita interna: ai parametri di default la formula da' ~0.011,
# in letteratura per gli stessi parametri e' riportato 0.004
INTERNAL_LOSS_FORMULA = "alpha^2 kappa_int^2 / (4 chi^2)"
INTERNAL_LOSS_REFERENCE = 0.004

THREE_QUBITS = (2, 2, 2)


def _bits(index: int) -> Tuple[int, int, int]:
    return (index >> 2) & 1, (index >> 1) & 1, index & 1


def parity(index: int) -> int:
    return sum(_bits(index)) % 2


EVEN_STATES = tuple(i for i in range(8) if parity(i) == 0)  # 000, 011, 101, 110
ODD_STATES = tuple(i for i in range(8) if parity(i) == 1)


def loss_amplitudes(alpha: float, eta: Sequence[float]) -> Tuple[float, float, float, float]:
    """
    Ampiezze dopo tre beam splitter di perdita: (alpha_bar, alpha_1, alpha_2, alpha_3).

    alpha_bar = alpha prod (1 - eta_i)^{1/2}; alpha_i = alpha eta_i^{1/2} prod_{j<i} (1 - eta_j)^{1/2}.
    """
    if len(eta) != 3 or any(not 0.0 <= e <= 1.0 for e in eta):
        raise UsageError("Servono tre riflettivita' eta_i in [0, 1].", MODULE)
    remaining = float(alpha)
    lost = []
    for e in eta:
        lost.append(remaining * np.sqrt(e))
        remaining *= np.sqrt(1 - e)
    return remaining, lost[0], lost[1], lost[2]


def measurement_error(alpha_bar: float) -> float:
    """p_M = erfc(sqrt(2) alpha_bar)/2."""
    return float(0.5 * erfc(np.sqrt(2) * alpha_bar))


def loss_error(alpha_i: float) -> float:
    return float(0.5 * (1 - np.exp(-2 * alpha_i ** 2)))


@dataclass(frozen=True)
class CheckConfig:
    alpha: float
    eta: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    basis: str = BASIS_Z

    def __post_init__(self):
        if self.alpha <= 0:
            raise UsageError("L'ampiezza coerente deve essere positiva.", MODULE)
        if self.basis not in (BASIS_Z, BASIS_X):
            raise UsageError(f"Base di parity check sconosciuta: '{self.basis}'", MODULE)
        object.__setattr__(self, 'eta', tuple(float(e) for e in self.eta))
        loss_amplitudes(self.alpha, self.eta)

    @property
    def amplitudes(self) -> Tuple[float, float, float, float]:
        return loss_amplitudes(self.alpha, self.eta)

    @property
    def alpha_bar(self) -> float:
        return self.amplitudes[0]

    @property
    def p1(self) -> float:
        return loss_error(self.amplitudes[1])

    @property
    def p2(self) -> float:
        return loss_error(self.amplitudes[2])

    @property
    def p_M(self) -> float:
        return measurement_error(self.alpha_bar)

    @property
    def error_operators(self) -> Tuple[str, str]:
        """Errori E1, E2 introdotti dalla perdita tra i qubit 1-2 e 2-3."""
        if self.basis == BASIS_Z:
            return "IZZ", "IIZ"
        return "IXX", "IIX"


def _as_density(state: Union[PureState, DensityOp]) -> DensityOp:
    rho = state.dm() if isinstance(state, PureState) else state
    if tuple(rho.dims) != THREE_QUBITS:
        raise DimensionError(f"Il parity check richiede tre qubit, ricevuto dims = {rho.dims}", MODULE)
    return rho


def parity_decomposition(state: PureState) -> Dict[str, Any]:
    """Scrive |Xi> = c_+ |Xi_+> + c_- |Xi_-> sui sottospazi di parita' Z."""
    if tuple(state.dims) != THREE_QUBITS:
        raise DimensionError(f"Servono tre qubit, ricevuto dims = {state.dims}", MODULE)
    result = {}
    for label, indices in (("+", EVEN_STATES), ("-", ODD_STATES)):
        projected = np.zeros(8, dtype=complex)
        projected[list(indices)] = state.amplitudes[list(indices)]
        weight = float(np.linalg.norm(projected))
        result["c" + label] = weight
        result["xi" + label] = PureState(THREE_QUBITS, projected / weight) if weight > 0 else None
    return result


def _three_hadamard() -> np.ndarray:
    return np.kron(np.kron(HADAMARD, HADAMARD), HADAMARD)


@dataclass(frozen=True)
class CoherentFrameState:
    """
    Stato congiunto qubit + campo nel riferimento non ortogonale {|+alpha_bar>, |-alpha_bar>}:
    rho = sum_{s,s'} blocks[s, s'] (x) |s alpha_bar><s' alpha_bar|, con indice 0 per + e 1 per -.
    """
    blocks: np.ndarray
    alpha_bar: float
    basis: str = BASIS_Z

    @property
    def overlap(self) -> float:
        """<alpha_bar|-alpha_bar> = e^{-2 alpha_bar^2}."""
        return float(np.exp(-2 * self.alpha_bar ** 2))

    def gram(self) -> np.ndarray:
        return np.array([[1.0, self.overlap], [self.overlap, 1.0]])

    def qubit_state(self) -> DensityOp:
        """Stato ridotto dei qubit (traccia sul campo)."""
        gram = self.gram()
        reduced = sum(self.blocks[s, t] * gram[t, s] for s in range(2) for t in range(2))
        return DensityOp(THREE_QUBITS, reduced)

    def trace(self) -> float:
        return self.qubit_state().trace()

    def to_fock(self, n_levels: int) -> DensityOp:
        """Rappresentazione esplicita qubit (x) Fock troncato."""
        kets = [coherent_ket(self.alpha_bar, n_levels), coherent_ket(-self.alpha_bar, n_levels)]
        total = np.zeros((8 * n_levels, 8 * n_levels), dtype=complex)
        for s in range(2):
            for t in range(2):
                total += np.kron(self.blocks[s, t], np.outer(kets[s], kets[t].conj()))
        return DensityOp(THREE_QUBITS + (n_levels,), total, check=False)


def coherent_ket(beta: complex, n_levels: int) -> np.ndarray:
    n = np.arange(n_levels)
    magnitude = abs(beta)
    if magnitude == 0:
        out = np.zeros(n_levels, dtype=complex)
        out[0] = 1.0
        return out
    log_abs = -magnitude ** 2 / 2 + n * np.log(magnitude) - 0.5 * gammaln(n + 1)
    return np.exp(log_abs) * np.exp(1j * n * np.angle(beta))


def parity_check_channel(state: Union[PureState, DensityOp], cfg: CheckConfig) -> CoherentFrameState:
    """
    Interazione di un impulso coerente con tre qubit e perdita dopo ogni interazione.

    Ogni elemento rho_ab dello stato d'ingresso finisce nel blocco
    (parita' di a, parita' di b) moltiplicato per le sovrapposizioni dei tre
    modi di perdita, che valgono e^{-2 alpha_i^2} quando i segni differiscono.
    """
    rho = _as_density(state).entries.copy()
    hadamards = _three_hadamard()
    if cfg.basis == BASIS_X:
        rho = hadamards @ rho @ hadamards.conj().T
    alpha_bar, a1, a2, a3 = cfg.amplitudes
    damping = [np.exp(-2 * a1 ** 2), np.exp(-2 * a2 ** 2), np.exp(-2 * a3 ** 2)]

    def loss_signs(index: int) -> Tuple[int, int, int]:
        s1, s2, s3 = _bits(index)
        return s1, (s1 + s2) % 2, (s1 + s2 + s3) % 2

    blocks = np.zeros((2, 2, 8, 8), dtype=complex)
    for a in range(8):
        for b in range(8):
            if rho[a, b] == 0:
                continue
            factor = 1.0
            for k, (x, y) in enumerate(zip(loss_signs(a), loss_signs(b))):
                if x != y:
                    factor *= damping[k]
            blocks[parity(a), parity(b), a, b] = rho[a, b] * factor
    if cfg.basis == BASIS_X:
        for s in range(2):
            for t in range(2):
                blocks[s, t] = hadamards @ blocks[s, t] @ hadamards.conj().T
    logger.debug("Parity check %s con alpha_bar = %.4f, p1 = %.3e, p2 = %.3e", cfg.basis, alpha_bar, cfg.p1, cfg.p2)
    return CoherentFrameState(blocks, alpha_bar, cfg.basis)


def dephasing_composition(rho: DensityOp, cfg: CheckConfig) -> DensityOp:
    """(E_{p1,E1} o E_{p2,E2})(rho) con E_{p,E}(rho) = (1-p) rho + p E rho E."""
    out = rho.entries
    for p, word in ((cfg.p2, cfg.error_operators[1]), (cfg.p1, cfg.error_operators[0])):
        op = pauli_word(word).entries
        out = (1 - p) * out + p * op @ out @ op.conj().T
    return DensityOp(rho.dims, out)


@dataclass(frozen=True)
class ParityOutcome:
    outcome: int
    probability: float
    state: Optional[DensityOp]
    joint_errors: Dict[str, float]


def _threshold_weights(alpha_bar: float, threshold: float, outcome: int) -> np.ndarray:
    """
    Integrali int <x|s alpha_bar><t alpha_bar|x> dx sulla regione dell'esito,
    con <x|beta> = pi^{-1/4} e^{-(x - sqrt(2) beta)^2/2}.
    """
    a = np.sqrt(2) * alpha_bar
    weights = np.empty((2, 2))
    for s, sign in enumerate((1, -1)):
        upper = 0.5 * erfc(threshold - sign * a)
        weights[s, s] = upper if outcome == 1 else 1 - upper
    cross = np.exp(-a ** 2) * 0.5 * erfc(threshold)
    weights[0, 1] = weights[1, 0] = cross if outcome == 1 else np.exp(-a ** 2) - cross
    return weights


def homodyne_parity_measurement(joint: CoherentFrameState, threshold: float = 0.0,
                                outcome: Optional[int] = None,
                                rng: Optional[np.random.Generator] = None) -> ParityOutcome:
    """
    Misura homodyne della quadratura x e decisione sul segno.

    Args:
        joint: Stato qubit + campo dopo il parity check.
        threshold: Soglia di decisione su x.
        outcome: +1 o -1 per ottenere un ramo specifico; altrimenti lo estraggo
                 con rng, o scelgo il piu' probabile.

    Returns:
        ParityOutcome con probabilita', stato post-misura dei qubit ed errori
        congiunti P("+", -) e P("-", +).
    """
    branches = {}
    for sign in (1, -1):
        weights = _threshold_weights(joint.alpha_bar, threshold, sign)
        unnormalized = sum(joint.blocks[s, t] * weights[s, t] for s in range(2) for t in range(2))
        branches[sign] = unnormalized

    even = np.zeros(8)
    even[list(EVEN_STATES)] = 1.0
    projector = {1: np.diag(even), -1: np.diag(1 - even)}
    if joint.basis == BASIS_X:
        hadamards = _three_hadamard()
        projector = {k: hadamards @ v @ hadamards for k, v in projector.items()}
    joint_errors = {
        "+,-": float(np.real(np.trace(projector[-1] @ branches[1]))),
        "-,+": float(np.real(np.trace(projector[1] @ branches[-1]))),
    }

    probabilities = {k: float(np.real(np.trace(v))) for k, v in branches.items()}
    if outcome is None:
        if rng is not None:
            outcome = 1 if rng.random() < probabilities[1] else -1
        else:
            outcome = 1 if probabilities[1] >= probabilities[-1] else -1
    if outcome not in (1, -1):
        raise UsageError("L'esito della misura deve essere +1 o -1.", MODULE)
    prob = probabilities[outcome]
    state = DensityOp(THREE_QUBITS, branches[outcome] / prob) if prob > 0 else None
    return ParityOutcome(outcome, prob, state, joint_errors)


# --- Compromesso tra errori ---

def p_tot_exact(alpha: float, eta1: float, eta2: float) -> float:
    """p_M + p_1 + p_2 con erfc esatto e p_i = (1 - e^{-2 alpha_i^2})/2."""
    alpha_bar, a1, a2, _ = loss_amplitudes(alpha, (eta1, eta2, 0.0))
    return measurement_error(alpha_bar) + loss_error(a1) + loss_error(a2)


def p_tot_approx(alpha: float, eta: Union[float, Sequence[float]]) -> float:
    """Forma asintotica e^{-2 alpha^2}/(2 alpha sqrt(2 pi)) + (1/2) sum_j eta_j alpha^2."""
    etas = (eta, eta) if np.isscalar(eta) else tuple(eta)
    return float(0.5 * np.exp(-2 * alpha ** 2) / (alpha * np.sqrt(2 * np.pi)) + 0.5 * sum(etas) * alpha ** 2)


def total_error(alpha: float, eta1: float, eta2: float) -> Dict[str, Any]:
    """
    Errore totale del parity check e suo minimo in alpha.

    Returns:
        Dizionario con p_tot (al valore alpha dato), alpha_opt, p_tot_opt,
        la forma approssimata e gli eventuali avvisi sul bracket.
    """
    if not (0 <= eta1 < 1 and 0 <= eta2 < 1):
        raise UsageError("Le riflettivita' devono stare in [0, 1).", MODULE)
    lo, hi = ALPHA_BRACKET
    objective = lambda a: p_tot_exact(a, eta1, eta2)
    coarse = np.linspace(lo, hi, 400)
    values = np.array([objective(a) for a in coarse])
    k = int(np.argmin(values))
    warnings = []
    if k in (0, len(coarse) - 1):
        alpha_opt = float(coarse[k])
        msg = f"Minimo di p_tot al bordo del bracket [{lo}, {hi}]."
        logger.warning(msg)
        warnings.append(msg)
    else:
        result = minimize_scalar(objective, bracket=(coarse[k - 1], coarse[k], coarse[k + 1]),
                                 method='golden', tol=GOLDEN_TOL)
        alpha_opt = float(result.x)
    return {
        "p_tot": objective(alpha),
        "alpha_opt": alpha_opt,
        "p_tot_opt": objective(alpha_opt),
        "p_tot_approx_opt": p_tot_approx(alpha_opt, (eta1, eta2)),
        "warnings": warnings,
    }


def majority_vote_error(p_M: float, N: int) -> float:
    """Errore della decisione a maggioranza su N misure sogliate indipendenti (pareggi a meta')."""
    if N < 1 or not 0 <= p_M <= 1:
        raise UsageError("Servono N >= 1 e p_M in [0, 1].", MODULE)
    error = binom.sf(N // 2, N, p_M)
    if N % 2 == 0:
        error += 0.5 * binom.pmf(N // 2, N, p_M)
    return float(error)


def soft_decision_error(alpha0: float, N: int, samples: int, rng: np.random.Generator) -> Dict[str, float]:
    """
    Monte Carlo della decisione soft su N misure homodyne con ampiezza alpha0.

    Il rapporto di verosimiglianza e' proporzionale a sum_k x_k, quindi
    decido sul segno della somma.
    """
    if N < 1 or samples < 1:
        raise UsageError("Servono N >= 1 e almeno un campione.", MODULE)
    mean = np.sqrt(2) * alpha0
    outcomes = rng.normal(mean, np.sqrt(0.5), size=(samples, N))
    errors = np.sum(outcomes, axis=1) < 0
    estimate = float(np.mean(errors))
    return {
        "error": estimate,
        "standard_error": float(np.sqrt(max(estimate * (1 - estimate), 1e-300) / samples)),
        "expected": measurement_error(np.sqrt(N) * alpha0),
    }


# --- Stato GHZ ---

def ghz_prepare(alpha: float, eta12: float, eta23: float) -> Tuple[DensityOp, float]:
    """
    Stato GHZ preparato con due parity check Z1Z2 e Z2Z3 e correzione X.

    Returns:
        (sigma, p) con sigma = (1 - p)|GHZ><GHZ| + sum_i p_i |i_perp><i_perp|.
    """
    for eta in (eta12, eta23):
        if not 0 <= eta <= 1:
            raise UsageError("Le riflettivita' devono stare in [0, 1].", MODULE)
    p12 = loss_error(np.sqrt(eta12) * alpha)
    p23 = loss_error(np.sqrt(eta23) * alpha)
    q12 = measurement_error((1 - eta12) * alpha)
    q23 = measurement_error((1 - eta23) * alpha)
    components = {
        "phase_flip": p12 + p23 - p12 * p23,
        "x1": q12,
        "x3": q23,
        "x2": q12 * q23,
    }
    p = float(sum(components.values()))
    if p > 1:
        raise UsageError(f"Probabilita' d'errore totale p = {p:.3f} > 1: parametri fuori regime.", MODULE)

    def ghz(sign: int, flip: Optional[int] = None) -> np.ndarray:
        first = ket(THREE_QUBITS, (0, 0, 0)).amplitudes
        second = ket(THREE_QUBITS, (1, 1, 1)).amplitudes
        vector = (first + sign * second) / np.sqrt(2)
        if flip is not None:
            perm = np.array([i ^ (1 << (2 - flip)) for i in range(8)])
            vector = vector[perm]
        return vector

    states = {"phase_flip": ghz(-1), "x1": ghz(1, 0), "x2": ghz(1, 1), "x3": ghz(1, 2)}
    target = ghz(1)
    sigma = (1 - p) * np.outer(target, target.conj())
    for name, weight in components.items():
        vector = states[name]
        sigma = sigma + weight * np.outer(vector, vector.conj())
    return DensityOp(THREE_QUBITS, sigma), p


def ghz_state() -> PureState:
    return PureState(THREE_QUBITS, (ket(THREE_QUBITS, (0, 0, 0)).amplitudes
                                    + ket(THREE_QUBITS, (1, 1, 1)).amplitudes) / np.sqrt(2))


# --- Fattibilita' in circuit QED ---

@dataclass(frozen=True)
class FeasibilityParams:
    chi: float
    kappa_int: float
    tau: float
    t2_star: float
    kappa0: Optional[float] = None
    eta_trans: float = 0.0
    eta_circ: float = 0.0

    def __post_init__(self):
        if self.kappa0 is None:
            object.__setattr__(self, 'kappa0', 2 * abs(self.chi))
        if self.kappa_int < 0 or self.tau <= 0 or self.t2_star <= 0 or self.kappa0 <= 0:
            raise UsageError("Parametri di fattibilita' fuori intervallo.", MODULE)
        if not (0 <= self.eta_trans <= 1 and 0 <= self.eta_circ <= 1):
            raise UsageError("Le perdite di trasmissione devono stare in [0, 1].", MODULE)
        if not np.isclose(abs(self.chi), self.kappa0 / 2, rtol=1e-6):
            logger.warning("|chi| != kappa0/2: il punto di lavoro per lo shift di fase pi/2 non e' rispettato.")


def _reflection_mismatch(omega: np.ndarray, fp: FeasibilityParams, s: int) -> np.ndarray:
    """|(-1)^s i sgn(chi) - R_s(omega)|^2 con R_s dalla riflessione dispersiva."""
    sign = (-1) ** s
    r, _ = dispersive_reflection(omega, 0.0, fp.chi, fp.kappa0, fp.kappa_int, sign)
    ideal = sign * 1j * np.sign(fp.chi)
    return np.abs(ideal - r) ** 2


def feasibility(fp: FeasibilityParams, waveform: Union[Waveform, Callable[[float], float]],
                alpha: float) -> Dict[str, float]:
    """
    Bilancio d'errore del parity check dispersivo.

    Args:
        fp: Parametri del dispositivo.
        waveform: Forma d'onda dell'impulso o la sua densita' spettrale |u(omega)|^2.
        alpha: Ampiezza coerente.

    Returns:
        Dizionario con epsilon_reflect esatto e approssimato (e i suoi due
        termini), epsilon_qubit ed eta totale.
    """
    overlaps = []
    for s in (0, 1):
        if isinstance(waveform, Waveform):
            omega, density = waveform_spectrum(waveform)
            d_omega = omega[1] - omega[0]
            integral = np.sum(density * _reflection_mismatch(omega, fp, s)) * d_omega / (2 * np.pi)
        else:
            width = FREQUENCY_WINDOW / fp.tau
            integral = quad(lambda w: waveform(w) * _reflection_mismatch(np.array(w), fp, s),
                            -width, width, limit=400, points=[0.0])[0] / (2 * np.pi)
        overlaps.append(np.exp(-alpha ** 2 * integral))
    bandwidth_term = alpha ** 2 / (2 * fp.tau ** 2 * fp.chi ** 2)
    loss_term = alpha ** 2 * fp.kappa_int ** 2 / (4 * fp.chi ** 2)
    return {
        "epsilon_reflect": float(1 - 0.5 * sum(overlaps)),
        "epsilon_reflect_approx": float(bandwidth_term + loss_term),
        "bandwidth_term": float(bandwidth_term),
        "internal_loss_term": float(loss_term),
        "epsilon_qubit": float(fp.tau / fp.t2_star),
        "eta_total": float(fp.eta_trans + fp.eta_circ),
    }


def strong_coupling_reflection(omega: Union[float, np.ndarray], g: float, kappa0: float,
                               kappa_int: float = 0.0, gamma: float = 0.0, s: int = 0) -> np.ndarray:
    """
    Riflessione nel meccanismo a forte accoppiamento: con il qubit in |0>
    la transizione |0> <-> |e> ibrida la cavita' (nessuno shift), con il qubit
    in |1> la cavita' vuota riflette con shift pi.
    """
    if s not in (0, 1):
        raise UsageError("Lo stato del qubit deve essere 0 oppure 1.", MODULE)
    omega = np.asarray(omega, dtype=float)
    kappa = kappa0 + kappa_int
    hybrid = g ** 2 / (gamma / 2 - 1j * omega) if s == 0 else 0.0
    return 1 - kappa0 / (kappa / 2 - 1j * omega + hybrid)
