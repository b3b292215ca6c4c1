# analysis/timebin.py
"""
Porta CZ a lunga distanza mediata da un fotone time-bin (schema con ancilla):
sagomatura dei drive di emissione/assorbimento, simulazione a cascata della
porta, fedelta' media, scaling dell'infedelta' con T1 e backaction dovuta alla
perdita del fotone in un bagno di sistemi a due livelli (TLS).

Convenzioni dei livelli dei qubit: g = 0, e = 1, f = 2. Il bin E corrisponde
a Q1 in |e>, il bin L a Q1 in |g>.
"""
import logging
from dataclasses import dataclass, field, replace
from functools import partial, reduce
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.optimize import minimize_scalar
from scipy.stats import linregress

import config
from analysis.cqed_analytics import FREQUENCY_WINDOW, gaussian_spectral_density
from core.dynamics import (CascadeNode, Envelope, IntegratorConfig, OpenSystem, TimeDependentOp,
                           Trajectory, Waveform, cascade, evolve)
from core.exceptions import DimensionError, UsageError
from core.qcore import DensityOp, LinOp, PureState, basis, destroy, embed, partial_trace, transition

logger = logging.getLogger(__name__)

MODULE = "timebin"

G, E, F = 0, 1, 2

EMIT = "emit"
ABSORB = "absorb"

ENTANGLEMENT = "entanglement-fidelity"
HAAR_MC = "haar-mc"
AVERAGINGS = (ENTANGLEMENT, HAAR_MC)

PRINTED = "printed"
HAAR_STATE = "haar-state"

PARABOLIC = "parabolic"
GOLDEN = "golden"

DEFAULT_KAPPA = 2 * np.pi * 50e6
DEFAULT_KAPPA_TAU = 40.0

TRUNCATION_TOL = 1e-4
DRIVE_RATIO_WARN = 0.25
BORN_LIMIT = 0.5
HERALD_TOL = 1e-6
QUADRATURE_POINTS = 4001
MIN_DECADES = 1.5


# --- Forme d'onda e sagomatura dei drive ---

def gaussian_waveform(grid: Sequence[float], t_peak: float, tau: float) -> Waveform:
    """u(t) = exp(-(t - t_peak)^2 / 2 tau^2) / (pi^(1/4) sqrt(tau)), rinormalizzata sulla griglia."""
    if tau <= 0:
        raise UsageError("La larghezza tau deve essere positiva.", MODULE)
    grid = np.asarray(grid, dtype=float)
    samples = np.exp(-((grid - t_peak) ** 2) / (2 * tau ** 2)) / (np.pi ** 0.25 * np.sqrt(tau))
    return Waveform.normalized(grid, samples)


def shape_drive(direction: str, u: Waveform, kappa: float,
                floor: float = config.LAMBDA_FLOOR) -> Tuple[Envelope, Dict[str, float]]:
    """
    Drive che emette (o assorbe) un fotone nella forma d'onda u.

    Args:
        direction: "emit" per Omega_e = (sqrt(k)/2) u / sqrt(int_t^inf |u|^2),
            "absorb" per Omega_a = (sqrt(k)/2) u / sqrt(int_-inf^t |u|^2).
        u: Forma d'onda normalizzata.
        kappa: Rate di decadimento della cavita' (rad/s).
        floor: Pavimento relativo dei denominatori.

    Returns:
        L'inviluppo Omega(t) e un dizionario con max|Omega| e max|Omega|/kappa.
    """
    if not isinstance(u, Waveform):
        raise UsageError("shape_drive richiede una Waveform normalizzata.", MODULE)
    if kappa <= 0:
        raise UsageError("kappa deve essere positivo.", MODULE)
    if direction == EMIT:
        weight = u.tail()
    elif direction == ABSORB:
        weight = u.head()
    else:
        raise UsageError(f"Direzione sconosciuta '{direction}' (attese: {EMIT}, {ABSORB}).", MODULE)

    samples = 0.5 * np.sqrt(kappa) * u.samples / np.sqrt(np.maximum(weight, floor))
    peak = float(np.max(np.abs(samples)))
    info = {"max_drive": peak, "max_ratio": peak / kappa}
    if info["max_ratio"] > DRIVE_RATIO_WARN:
        logger.warning(f"max|Omega|/kappa = {info['max_ratio']:.3f}: fuori dal regime |Omega| << kappa.")
    else:
        logger.debug(f"Drive {direction}: max|Omega|/kappa = {info['max_ratio']:.3e}")
    return Envelope(u.grid, samples), info


def forward_waveform(omega: Envelope, kappa: float) -> Waveform:
    """Forma d'onda emessa da un drive dato: u = (2 Omega / sqrt(k)) exp(-(2/k) int |Omega|^2)."""
    if kappa <= 0:
        raise UsageError("kappa deve essere positivo.", MODULE)
    depletion = cumulative_trapezoid(np.abs(omega.samples) ** 2, omega.grid, initial=0.0)
    samples = 2 * omega.samples / np.sqrt(kappa) * np.exp(-2 * depletion / kappa)
    return Waveform.normalized(omega.grid, samples)


# --- Configurazione della porta ---

@dataclass(frozen=True)
class GateConfig:
    """
    Parametri della porta CZ. La durata totale e' T = 16 tau con i picchi dei
    bin E e L in T/4 e 3T/4. Layout: Q1(3), C1, Q2(2), C2, Q3(3), C3.
    """
    kappa: float = DEFAULT_KAPPA
    tau: float = DEFAULT_KAPPA_TAU / DEFAULT_KAPPA
    t1: float = np.inf
    n_max: int = config.NMAX_DEFAULT
    drive_points: int = 2049
    save_points: int = 9

    def __post_init__(self):
        if self.kappa <= 0 or self.tau <= 0:
            raise UsageError("kappa e tau devono essere positivi.", MODULE)
        if self.t1 <= 0:
            raise UsageError("T1 deve essere positivo (usa inf per nessun decadimento).", MODULE)
        if self.n_max < 1:
            raise UsageError("n_max deve essere almeno 1.", MODULE)
        if self.drive_points < 16 or self.save_points < 2:
            raise UsageError("Griglie temporali troppo piccole.", MODULE)

    @property
    def total_time(self) -> float:
        return 16.0 * self.tau

    @property
    def half_time(self) -> float:
        return 8.0 * self.tau

    @property
    def peaks(self) -> Tuple[float, float]:
        return 4.0 * self.tau, 12.0 * self.tau

    @property
    def gamma(self) -> float:
        return 0.0 if np.isinf(self.t1) else 1.0 / self.t1

    @property
    def kappa_tau(self) -> float:
        return self.kappa * self.tau

    @property
    def dims(self) -> Tuple[int, ...]:
        c = self.n_max + 1
        return (3, c, 2, c, 3, c)


def _pi_pulse(d: int, a: int, b: int) -> np.ndarray:
    """Impulso pi ideale: scambia |a> e |b> lasciando invariati gli altri livelli."""
    mat = np.eye(d, dtype=complex)
    mat[a, a] = mat[b, b] = 0.0
    mat[a, b] = mat[b, a] = 1.0
    return mat


# pi_fe seguito da pi_eg: g -> e, e -> f
PREP_Q1 = _pi_pulse(3, E, G) @ _pi_pulse(3, F, E)
S_GATE = np.diag([1.0, 1.0j, 1.0])
Z_QUTRIT = np.diag([1.0, -1.0, 1.0]).astype(complex)
CZ_TARGET = np.diag([-1.0, 1.0, 1.0, 1.0]).astype(complex)


def _qubit_decoherence(d: int, gamma: float, dims: Tuple[int, ...]) -> List[TimeDependentOp]:
    if gamma <= 0:
        return []
    ops = [np.sqrt(gamma) * transition(d, G, E),
           np.sqrt(gamma / 2) * (transition(d, E, E) - transition(d, G, G))]
    if d == 3:
        ops += [np.sqrt(gamma) * transition(d, E, F),
                np.sqrt(gamma / 2) * (transition(d, F, F) - transition(d, E, E))]
    return [TimeDependentOp(embed(op, 0, dims)) for op in ops]


def _raman_node(omega: Envelope, gamma: float, n_levels: int) -> OpenSystem:
    """Qutrit + cavita' con H = i Omega(t) (|g><f| a^dag - h.c.)."""
    dims = (3, n_levels)
    a = embed(destroy(n_levels), 1, dims).entries
    sigma = embed(transition(3, G, F), 0, dims).entries
    raising = 1j * sigma @ a.conj().T
    zero = TimeDependentOp.zero(dims).static
    hamiltonian = TimeDependentOp(zero, ((LinOp(dims, raising), omega),
                                         (LinOp(dims, raising.conj().T), omega.conj())))
    return OpenSystem(hamiltonian, tuple(_qubit_decoherence(3, gamma, dims)), dims)


def _dispersive_node(chi: Envelope, gamma: float, n_levels: int) -> OpenSystem:
    """Qubit + cavita' con H = chi(t) (|g><g| - |e><e|) a^dag a."""
    dims = (2, n_levels)
    a = destroy(n_levels)
    op = np.kron(np.diag([1.0, -1.0]), a.conj().T @ a)
    zero = TimeDependentOp.zero(dims).static
    hamiltonian = TimeDependentOp(zero, ((LinOp(dims, op), chi),))
    return OpenSystem(hamiltonian, tuple(_qubit_decoherence(2, gamma, dims)), dims)


def _windowed(early: np.ndarray, late: np.ndarray, grid: np.ndarray, half: float) -> Envelope:
    return Envelope(grid, np.where(grid < half, early, late), breakpoints=[half])


def build_cz_system(cfg: GateConfig, loss: float = 0.0) -> Tuple[OpenSystem, Dict[str, Any]]:
    """
    Costruisce il sistema aperto a sei sottosistemi della porta CZ.

    Args:
        cfg: Parametri della porta.
        loss: Probabilita' di perdita artificiale del fotone tra C1 e C2.

    Returns:
        Il sistema in cascata Q1C1 -> Q2C2 -> Q3C3 e i metadati dei drive.
    """
    if not 0.0 <= loss < 1.0:
        raise UsageError(f"La probabilita' di perdita deve stare in [0, 1), ricevuto {loss}", MODULE)
    T, half = cfg.total_time, cfg.half_time
    t_early, t_late = cfg.peaks
    grid = np.linspace(0.0, T, cfg.drive_points)
    n_levels = cfg.n_max + 1

    u_early = gaussian_waveform(grid, t_early, cfg.tau)
    u_late = gaussian_waveform(grid, t_late, cfg.tau)
    emit_e, info_ee = shape_drive(EMIT, u_early, cfg.kappa)
    emit_l, info_el = shape_drive(EMIT, u_late, cfg.kappa)
    absorb_e, info_ae = shape_drive(ABSORB, u_early, cfg.kappa)
    absorb_l, info_al = shape_drive(ABSORB, u_late, cfg.kappa)

    omega_1 = _windowed(emit_e.samples, emit_l.samples, grid, half)
    omega_3 = _windowed(absorb_e.samples, absorb_l.samples, grid, half)
    chi = _windowed(np.zeros_like(grid), np.full_like(grid, cfg.kappa / 2), grid, half)

    nodes = [CascadeNode(_raman_node(omega_1, cfg.gamma, n_levels), mode=1, kappa=(1.0 - loss) * cfg.kappa),
             CascadeNode(_dispersive_node(chi, cfg.gamma, n_levels), mode=1, kappa=cfg.kappa),
             CascadeNode(_raman_node(omega_3, cfg.gamma, n_levels), mode=1, kappa=cfg.kappa)]
    system = cascade(nodes)
    if loss > 0:
        # canale di perdita: la frazione persa del campo di C1 esce senza raggiungere C2
        lost = np.sqrt(loss * cfg.kappa) * embed(destroy(n_levels), 1, system.dims).entries
        extra = TimeDependentOp(LinOp(system.dims, lost))
        system = OpenSystem(system.hamiltonian, system.collapse + (extra,), system.dims)

    ratio = max(i["max_ratio"] for i in (info_ee, info_el, info_ae, info_al))
    return system, {"max_drive_ratio": ratio, "drive_grid_points": grid.size, "loss": loss}


def _kick_at_half(dims: Tuple[int, ...]) -> LinOp:
    """L_pi: pi_fe e poi pi_eg su Q1, pi_fe su Q3."""
    factors = [np.eye(d, dtype=complex) for d in dims]
    factors[0] = PREP_Q1
    factors[4] = _pi_pulse(3, F, E)
    return LinOp(dims, reduce(np.kron, factors))


def initial_state(psi0: PureState, cfg: GateConfig) -> DensityOp:
    """Stato iniziale: mappatura g -> e, e -> f su Q1, Q3 in |g>, cavita' nel vuoto."""
    if tuple(psi0.dims) != (2, 2):
        raise DimensionError(f"Lo stato di ingresso deve avere dims (2, 2), ricevuto {psi0.dims}", MODULE)
    if not psi0.normalized:
        psi0 = psi0.normalize()
    psi12 = np.zeros((3, 2), dtype=complex)
    psi12[:2, :] = psi0.amplitudes.reshape(2, 2)
    psi12 = PREP_Q1 @ psi12
    vac = basis(cfg.n_max + 1, 0)
    full = np.einsum('ab,c,d,e,f->acbdef', psi12, vac, vac, basis(3, G), vac).ravel()
    return DensityOp(cfg.dims, np.outer(full, full.conj()))


def _save_grid(cfg: GateConfig) -> np.ndarray:
    half, T = cfg.half_time, cfg.total_time
    n = max(cfg.save_points // 2, 1) + 1
    return np.concatenate([np.linspace(0.0, half, n)[:-1], np.linspace(half, T, n)])


def _top_level_population(traj: Trajectory, dims: Tuple[int, ...]) -> float:
    worst = 0.0
    for state in traj.states:
        pops = np.real(np.diag(state.entries)).reshape(dims)
        for axis in (1, 3, 5):
            others = tuple(k for k in range(len(dims)) if k != axis)
            worst = max(worst, float(pops.sum(axis=others)[-1]))
    return worst


@dataclass
class CzResult:
    final_state: DensityOp
    probabilities: Dict[str, float]
    unnormalized: np.ndarray
    corrected: Optional[DensityOp]
    trajectory: Trajectory
    warnings: List[str] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)


def simulate_cz(psi0: PureState, cfg: Optional[GateConfig] = None, loss: float = 0.0,
                integrator: Optional[IntegratorConfig] = None) -> CzResult:
    """
    Simula la porta CZ per un ingresso a due qubit.

    Alla fine dell'evoluzione applica l'impulso ideale pi_fg su Q3, la porta S
    su Q1 e misura Q3 nella base X; l'esito |-> viene corretto con Z1.
    |f> su Q3 annuncia la perdita del fotone.

    Returns:
        Un CzResult con lo stato completo a T, le probabilita' dei rami
        ("g", "e", "f" prima della misura X, "+" e "-" dopo) e lo stato
        corretto M(|psi><psi|) su Q1(3) x Q2(2), normalizzato sui casi non annunciati.
    """
    cfg = cfg or GateConfig()
    system, meta = build_cz_system(cfg, loss)
    rho0 = initial_state(psi0, cfg)
    logger.info(f"Simulo la porta CZ: kappa*tau = {cfg.kappa_tau:.1f}, T1 = {cfg.t1:.3e} s, "
                f"dimensione {rho0.dim}")
    traj = evolve(system, rho0, _save_grid(cfg), integrator,
                  kicks={cfg.half_time: _kick_at_half(cfg.dims)})

    warnings: List[str] = []
    top = _top_level_population(traj, cfg.dims)
    if top > TRUNCATION_TOL:
        msg = (f"Popolazione {top:.2e} sul livello n_max = {cfg.n_max} di una cavita': "
               f"aumentare n_max.")
        logger.warning(msg)
        warnings.append(msg)

    qubits = partial_trace(traj.final, keep=[0, 2, 4])
    final_ops = reduce(np.kron, [S_GATE, np.eye(2), _pi_pulse(3, F, G)])
    rho = final_ops @ qubits.entries @ final_ops.conj().T
    rho = rho.reshape(6, 3, 6, 3)

    populations = {label: float(np.real(np.trace(rho[:, k, :, k]))) for label, k in (("g", G), ("e", E), ("f", F))}
    plus = (basis(3, E) + basis(3, G)) / np.sqrt(2)
    minus = (basis(3, E) - basis(3, G)) / np.sqrt(2)
    rho_plus = np.einsum('k,ikjl,l->ij', plus.conj(), rho, plus)
    rho_minus = np.einsum('k,ikjl,l->ij', minus.conj(), rho, minus)
    z1 = np.kron(Z_QUTRIT, np.eye(2))
    unnormalized = rho_plus + z1 @ rho_minus @ z1

    probabilities = dict(populations)
    probabilities["+"] = float(np.real(np.trace(rho_plus)))
    probabilities["-"] = float(np.real(np.trace(rho_minus)))
    total = populations["g"] + populations["e"] + populations["f"]
    if abs(total - 1.0) > HERALD_TOL:
        msg = f"Probabilita' dei rami di Q3 sommano a {total:.8f}."
        logger.warning(msg)
        warnings.append(msg)

    success = probabilities["+"] + probabilities["-"]
    corrected = None
    if success > 0:
        corrected = DensityOp((3, 2), unnormalized / success, check=False)
    logger.info(f"Perdita annunciata (Q3 in |f>): {populations['f']:.3e}")

    meta.update({"max_truncation_population": top, "nfev": traj.metadata.get("nfev")})
    return CzResult(final_state=traj.final, probabilities=probabilities, unnormalized=unnormalized,
                    corrected=corrected, trajectory=traj, warnings=warnings, metadata=meta)


# --- Fedelta' media della porta ---

_SINGLE_QUBIT_INPUTS = (np.array([1, 0], dtype=complex),
                        np.array([0, 1], dtype=complex),
                        np.array([1, 1], dtype=complex) / np.sqrt(2),
                        np.array([1, 1j], dtype=complex) / np.sqrt(2))


def spanning_inputs() -> List[PureState]:
    """I 16 stati prodotto {|g>, |e>, |+>, |+i>}^2: il loro span contiene tutti gli operatori 4x4."""
    return [PureState((2, 2), np.kron(a, b)) for a in _SINGLE_QUBIT_INPUTS for b in _SINGLE_QUBIT_INPUTS]


def _simulated_output(psi: PureState, cfg: GateConfig, loss: float,
                      integrator: Optional[IntegratorConfig]) -> np.ndarray:
    return simulate_cz(psi, cfg, loss, integrator).unnormalized


def _channel_images(outputs: List[np.ndarray], inputs: List[PureState]) -> np.ndarray:
    """Immagini E(|i><j|) ricostruite per linearita', forma (16, D, D) con indice i*4 + j."""
    columns = np.column_stack([inp.dm().entries.ravel() for inp in inputs])
    coefficients = np.linalg.solve(columns, np.eye(16, dtype=complex))
    stacked = np.stack(outputs)
    return np.tensordot(coefficients.T, stacked, axes=(1, 0))


def _target_isometry(out_dim: int) -> np.ndarray:
    if out_dim == 4:
        return CZ_TARGET
    if out_dim == 6:
        embedding = np.zeros((6, 4), dtype=complex)
        for a in range(2):
            for b in range(2):
                embedding[2 * a + b, 2 * a + b] = 1.0
        return embedding @ CZ_TARGET
    raise DimensionError(f"Uscita del canale di dimensione {out_dim} non supportata.", MODULE)


def apply_measurement_error(fidelity: float, p_m: float, convention: str = PRINTED) -> float:
    """
    Errore di misura sull'ancilla Q3.

    "printed": F = (1 - p_m) F(0). "haar-state": F = (1 - p_m) F(0) + p_m / 5,
    cioe' un esito sbagliato produce Z1 U_CZ, la cui fedelta' media e' 1/5.
    """
    if not 0.0 <= p_m <= 1.0:
        raise UsageError(f"p_m deve stare in [0, 1], ricevuto {p_m}", MODULE)
    if convention == PRINTED:
        return (1.0 - p_m) * fidelity
    if convention == HAAR_STATE:
        return (1.0 - p_m) * fidelity + p_m / 5.0
    raise UsageError(f"Convenzione sconosciuta '{convention}'.", MODULE)


def gate_fidelity(cfg: Optional[GateConfig] = None, averaging: str = ENTANGLEMENT, p_m: float = 0.0,
                  convention: str = PRINTED,
                  channel: Optional[Callable[[PureState], np.ndarray]] = None,
                  samples: int = 2000, seed: int = 0, loss: float = 0.0,
                  integrator: Optional[IntegratorConfig] = None,
                  map_fn: Callable = map) -> Dict[str, float]:
    """
    Fedelta' media post-selezionata della porta rispetto a U_CZ = exp(i pi |gg><gg|).

    Il canale non normalizzato viene ricostruito dalle 16 uscite degli stati di
    `spanning_inputs`. Con "entanglement-fidelity" la media di Haar e' calcolata
    in forma chiusa (rapporto tra media della fedelta' non normalizzata e media
    della probabilita' di successo); con "haar-mc" si normalizza stato per stato
    su `samples` ingressi di Haar.

    Args:
        channel: Sostituisce la simulazione: mappa un ingresso puro nella matrice
            non normalizzata di uscita (4x4 oppure Q1(3) x Q2(2)).
        map_fn: Funzione di tipo `map` usata per le 16 simulazioni (es. executor.map).
    """
    if averaging not in AVERAGINGS:
        raise UsageError(f"Media sconosciuta '{averaging}' (attese: {', '.join(AVERAGINGS)}).", MODULE)
    cfg = cfg or GateConfig()
    if channel is None:
        channel = partial(_simulated_output, cfg=cfg, loss=loss, integrator=integrator)

    inputs = spanning_inputs()
    outputs = [np.asarray(out, dtype=complex) for out in map_fn(channel, inputs)]
    images = _channel_images(outputs, inputs)
    w = _target_isometry(images.shape[1])
    d = 4
    pulled = np.einsum('ai,mab,bj->mij', w.conj(), images, w)

    diagonal = [4 * y + y for y in range(d)]
    success = float(np.real(sum(np.trace(images[m]) for m in diagonal))) / d
    if success <= 0:
        raise UsageError("Il canale non produce mai esiti non annunciati.", MODULE)

    stderr = 0.0
    if averaging == ENTANGLEMENT:
        coherent = sum(pulled[4 * x + z][x, z] for x in range(d) for z in range(d))
        trace_identity = sum(np.trace(pulled[m]) for m in diagonal)
        unnormalized = float(np.real(coherent + trace_identity)) / (d * (d + 1))
        f0 = unnormalized / success
    else:
        rng = np.random.Generator(np.random.Philox(seed))
        values = np.empty(samples)
        for k in range(samples):
            psi = rng.normal(size=d) + 1j * rng.normal(size=d)
            psi /= np.linalg.norm(psi)
            weights = np.outer(psi, psi.conj()).ravel()
            out = np.tensordot(weights, images, axes=(0, 0))
            target = w @ psi
            values[k] = np.real(np.vdot(target, out @ target)) / np.real(np.trace(out))
        f0 = float(np.mean(values))
        stderr = float(np.std(values, ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0

    f0 = float(np.clip(f0, 0.0, 1.0))
    f = apply_measurement_error(f0, p_m, convention)
    logger.info(f"Fedelta' della porta ({averaging}): F(0) = {f0:.6f}, F = {f:.6f}")
    return {"fidelity": f, "epsilon": 1.0 - f, "fidelity_ideal_readout": f0,
            "success_probability": success, "stderr": stderr}


# --- Scaling dell'infedelta' con T1 ---

def fit_power_law(x: Sequence[float], y: Sequence[float]) -> Dict[str, float]:
    """Retta dei minimi quadrati in scala log-log: y = prefactor * x^exponent."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise UsageError("fit_power_law richiede almeno due punti strettamente positivi.", MODULE)
    fit = linregress(np.log(x), np.log(y))
    return {"prefactor": float(np.exp(fit.intercept)), "exponent": float(fit.slope),
            "exponent_stderr": float(fit.stderr)}


def _simulated_infidelity(point: Tuple[GateConfig, float, float]) -> float:
    cfg, tau, t1 = point
    return gate_fidelity(replace(cfg, tau=tau, t1=t1))["epsilon"]


def _is_convex(x: np.ndarray, y: np.ndarray) -> bool:
    slopes = np.diff(y) / np.diff(x)
    scale = max(float(np.max(np.abs(slopes))), 1e-300)
    return bool(np.all(np.diff(slopes) >= -1e-9 * scale))


def _locate_minimum(log_tau: np.ndarray, eps: np.ndarray,
                    refine_fn: Optional[Callable[[float], float]]) -> Tuple[float, float, bool]:
    k = int(np.argmin(eps))
    if k == 0 or k == eps.size - 1:
        return float(np.exp(log_tau[k])), float(eps[k]), False
    if refine_fn is not None:
        res = minimize_scalar(refine_fn, bounds=(log_tau[k - 1], log_tau[k + 1]), method="bounded",
                              options={"xatol": 1e-12})
        return float(np.exp(res.x)), float(res.fun), True
    c2, c1, c0 = np.polyfit(log_tau[k - 1:k + 2], eps[k - 1:k + 2], 2)
    if c2 <= 0:
        return float(np.exp(log_tau[k])), float(eps[k]), True
    vertex = -c1 / (2 * c2)
    return float(np.exp(vertex)), float(c0 - c1 ** 2 / (4 * c2)), True


def scaling_sweep(t1_list: Sequence[float], tau_grid: Sequence[float], cfg: Optional[GateConfig] = None,
                  infidelity: Optional[Callable[[float, float], float]] = None,
                  refine: str = PARABOLIC, map_fn: Callable = map) -> Dict[str, Any]:
    """
    Per ogni T1 cerca il tau che minimizza l'infedelta' e stima le leggi di scala
    tau_opt = (K/kappa)(kappa T1)^xi e eps_min = D (kappa T1)^zeta.

    Args:
        t1_list: Tempi di rilassamento (s).
        tau_grid: Larghezze degli impulsi (s), crescenti.
        cfg: Configurazione di base (kappa, n_max, ...).
        infidelity: eps(tau, T1) alternativa alla simulazione (es. un modello analitico).
        refine: "parabolic" (parabola sui tre punti attorno al minimo in log tau)
            oppure "golden" (ricerca limitata, solo con `infidelity` fornita).
        map_fn: Funzione di tipo `map` per valutare i punti della griglia in parallelo.

    Returns:
        Dizionario con le righe per T1 ("t1_s", "tau_opt_s", "eps_min", "convex"),
        i fit (A, B, K, D, xi, zeta con errori) e gli avvisi.
    """
    cfg = cfg or GateConfig()
    t1 = np.asarray(sorted(float(t) for t in t1_list))
    taus = np.asarray(tau_grid, dtype=float)
    if t1.size < 2 or np.any(t1 <= 0):
        raise UsageError("Servono almeno due valori positivi di T1.", MODULE)
    if taus.size < 3 or np.any(taus <= 0) or np.any(np.diff(taus) <= 0):
        raise UsageError("La griglia di tau deve avere almeno tre valori positivi crescenti.", MODULE)
    if refine not in (PARABOLIC, GOLDEN):
        raise UsageError(f"Raffinamento sconosciuto '{refine}'.", MODULE)
    if refine == GOLDEN and infidelity is None:
        raise UsageError("Il raffinamento 'golden' richiede una funzione di infedelta' esplicita.", MODULE)

    warnings: List[str] = []
    decades = float(np.log10(t1[-1] / t1[0]))
    if t1.size < 4 or decades < MIN_DECADES:
        msg = (f"Fit di scaling con {t1.size} valori di T1 su {decades:.2f} decadi: "
               f"la stima degli esponenti e' poco vincolata.")
        logger.warning(msg)
        warnings.append(msg)

    if infidelity is None:
        points = [(cfg, tau, t) for t in t1 for tau in taus]
        values = np.array(list(map_fn(_simulated_infidelity, points)), dtype=float)
    else:
        values = np.array([infidelity(tau, t) for t in t1 for tau in taus], dtype=float)
    eps = values.reshape(t1.size, taus.size)
    log_tau = np.log(taus)

    rows = []
    for k, t in enumerate(t1):
        refine_fn = None
        if refine == GOLDEN:
            refine_fn = lambda x, t=t: float(infidelity(np.exp(x), t))
        convex = _is_convex(log_tau, eps[k])
        if not convex:
            msg = f"Campioni di eps(tau) non convessi per T1 = {t:.3e} s."
            logger.warning(msg)
            warnings.append(msg)
        tau_opt, eps_min, interior = _locate_minimum(log_tau, eps[k], refine_fn)
        if not interior:
            msg = f"Minimo sul bordo della griglia di tau per T1 = {t:.3e} s."
            logger.warning(msg)
            warnings.append(msg)
        rows.append({"t1_s": float(t), "tau_opt_s": tau_opt, "eps_min": eps_min,
                     "convex": convex, "interior": interior})

    kt1 = cfg.kappa * t1
    tau_fit = fit_power_law(kt1, [cfg.kappa * r["tau_opt_s"] for r in rows])
    eps_fit = fit_power_law(kt1, [r["eps_min"] for r in rows])

    # modello a due termini A/(kappa tau)^2 + B tau/T1, lineare in (A, B)
    tt, ll = np.meshgrid(taus, t1)
    design = np.column_stack([1.0 / (cfg.kappa * tt.ravel()) ** 2, (tt / ll).ravel()])
    (a_coef, b_coef), *_ = np.linalg.lstsq(design, eps.ravel(), rcond=None)

    fits = {"A": float(a_coef), "B": float(b_coef),
            "K": tau_fit["prefactor"], "xi": tau_fit["exponent"], "xi_stderr": tau_fit["exponent_stderr"],
            "D": eps_fit["prefactor"], "zeta": eps_fit["exponent"], "zeta_stderr": eps_fit["exponent_stderr"]}
    logger.info(f"Scaling: xi = {fits['xi']:.4f}, zeta = {fits['zeta']:.4f}")
    return {"rows": rows, "fits": fits, "eps": eps, "tau_grid": taus, "warnings": warnings}


# --- Backaction della perdita in un bagno di TLS ---

FLAT = "flat"
GAUSSIAN = "gaussian"
TABULATED = "tabulated"
DISCRETE = "discrete"
BATH_VARIANTS = (FLAT, GAUSSIAN, TABULATED, DISCRETE)


@dataclass(frozen=True)
class BathSpec:
    """
    Densita' spettrale J(omega) del bagno (in rad/s, rispetto alla frequenza del fotone).

    Le varianti continue usano J0 (piatta), (g, width, detuning) per la gaussiana
    J = sqrt(2 pi) (g^2 / width) exp(-(omega - detuning)^2 / 2 width^2) oppure una
    tabella (omega, density). La variante discreta elenca i TLS come
    (g_j, delta_omega_j, x_j) con velocita' di propagazione `speed`.
    """
    variant: str
    j0: float = 0.0
    g: float = 0.0
    width: float = 0.0
    detuning: float = 0.0
    omega: Optional[np.ndarray] = None
    density: Optional[np.ndarray] = None
    tls: Tuple[Tuple[float, float, float], ...] = ()
    speed: float = 1.0

    def __post_init__(self):
        if self.variant not in BATH_VARIANTS:
            raise UsageError(f"Variante di bagno sconosciuta '{self.variant}'.", MODULE)
        if self.variant == FLAT and self.j0 < 0:
            raise UsageError("J0 deve essere non negativa.", MODULE)
        if self.variant == GAUSSIAN and self.width <= 0:
            raise UsageError("La larghezza del bagno gaussiano deve essere positiva.", MODULE)
        if self.variant == TABULATED:
            if self.omega is None or self.density is None:
                raise UsageError("Il bagno tabulato richiede omega e density.", MODULE)
            omega = np.asarray(self.omega, dtype=float)
            density = np.asarray(self.density, dtype=float)
            if omega.shape != density.shape or omega.size < 2 or np.any(np.diff(omega) <= 0):
                raise UsageError("Tabella di J(omega) non valida.", MODULE)
            if np.any(density < 0):
                raise UsageError("J(omega) deve essere non negativa.", MODULE)
            object.__setattr__(self, 'omega', omega)
            object.__setattr__(self, 'density', density)
        if self.variant == DISCRETE:
            tls = tuple((float(g), float(w), float(x)) for g, w, x in self.tls)
            if not tls or not np.all(np.isfinite(np.array(tls))):
                raise UsageError("La lista di TLS deve essere non vuota e finita.", MODULE)
            object.__setattr__(self, 'tls', tls)
        if self.speed <= 0:
            raise UsageError("La velocita' di propagazione deve essere positiva.", MODULE)

    @classmethod
    def flat(cls, j0: float) -> 'BathSpec':
        return cls(FLAT, j0=j0)

    @classmethod
    def gaussian(cls, g: float, width: float, detuning: float = 0.0) -> 'BathSpec':
        return cls(GAUSSIAN, g=g, width=width, detuning=detuning)

    @classmethod
    def tabulated(cls, omega: Sequence[float], density: Sequence[float]) -> 'BathSpec':
        return cls(TABULATED, omega=np.asarray(omega), density=np.asarray(density))

    @classmethod
    def discrete(cls, couplings: Sequence[float], detunings: Sequence[float],
                 positions: Optional[Sequence[float]] = None, speed: float = 1.0) -> 'BathSpec':
        positions = np.zeros(len(couplings)) if positions is None else positions
        if not len(couplings) == len(detunings) == len(positions):
            raise UsageError("Accoppiamenti, detuning e posizioni hanno lunghezze diverse.", MODULE)
        return cls(DISCRETE, tls=tuple(zip(couplings, detunings, positions)), speed=speed)

    def spectral_density(self, omega: np.ndarray) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        if self.variant == FLAT:
            return np.full_like(omega, self.j0)
        if self.variant == GAUSSIAN:
            return (np.sqrt(2 * np.pi) * self.g ** 2 / self.width
                    * np.exp(-((omega - self.detuning) ** 2) / (2 * self.width ** 2)))
        if self.variant == TABULATED:
            return np.interp(omega, self.omega, self.density, left=0.0, right=0.0)
        raise UsageError("La variante discreta non ha una densita' continua.", MODULE)


@dataclass(frozen=True)
class LossBackaction:
    q: float
    coherence: complex

    def __post_init__(self):
        if abs(self.coherence) > 1.0 + 1e-12:
            raise UsageError(f"|C| = {abs(self.coherence):.6f} > 1.", MODULE)

    @property
    def eta(self) -> float:
        return 0.5 * (1.0 - min(abs(self.coherence), 1.0))

    @property
    def phase(self) -> float:
        return float(np.angle(self.coherence))


def effective_width(u: Waveform) -> float:
    """tau equivalente: sqrt(2) volte la deviazione standard di |u(t)|^2."""
    weight = np.abs(u.samples) ** 2
    mean = trapezoid(u.grid * weight, u.grid)
    var = trapezoid((u.grid - mean) ** 2 * weight, u.grid)
    return float(np.sqrt(2 * var))


def waveform_amplitude(u: Union[Waveform, None], omega: np.ndarray, tau: float) -> np.ndarray:
    """u(omega) = int dt exp(i omega t) u(t); per u = None l'impulso gaussiano centrato in zero."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if u is None:
        return np.sqrt(2 * np.sqrt(np.pi) * tau) * np.exp(-(tau * omega) ** 2 / 2)
    phases = np.exp(1j * np.outer(omega, u.grid))
    return trapezoid(phases * u.samples[None, :], u.grid, axis=1)


def _quadrature_window(bath: BathSpec, tau: float) -> np.ndarray:
    half = FREQUENCY_WINDOW / tau
    if bath.variant == GAUSSIAN:
        # il prodotto J |u|^2 e' concentrato sulla scala piu' stretta tra 1/tau e la larghezza del bagno
        precision = 1.0 / bath.width ** 2 + 2 * tau ** 2
        center = bath.detuning / bath.width ** 2 / precision
        half = FREQUENCY_WINDOW / np.sqrt(precision)
        return np.linspace(center - half, center + half, QUADRATURE_POINTS)
    if bath.variant == TABULATED:
        lo = max(-half, bath.omega[0])
        hi = min(half, bath.omega[-1])
        if lo >= hi:
            return np.linspace(-half, half, QUADRATURE_POINTS)
        return np.linspace(lo, hi, QUADRATURE_POINTS)
    return np.linspace(-half, half, QUADRATURE_POINTS)


def _closed_form(bath: BathSpec, tau: float, tau_sep: float) -> Tuple[float, complex]:
    if bath.variant == FLAT:
        return bath.j0 * tau, complex(np.exp(-(tau_sep / (2 * tau)) ** 2))
    lam, delta = bath.width, bath.detuning
    spread = 1.0 + 2 * (lam * tau) ** 2
    q = 2 * np.sqrt(np.pi) * (bath.g * tau) ** 2 * np.exp(-(delta * tau) ** 2 / spread) / np.sqrt(spread)
    c = np.exp(-1j * delta * tau_sep) * np.exp(-(lam * tau_sep) ** 2 / (2 * spread))
    return float(q), complex(c)


def loss_backaction(bath: BathSpec, u: Optional[Waveform], tau_sep: float,
                    tau: Optional[float] = None) -> LossBackaction:
    """
    Probabilita' q di perdere il fotone time-bin nel bagno e fattore di coerenza C
    tra i rami E e L separati da tau_sep.

    Args:
        bath: Densita' spettrale del bagno.
        u: Forma d'onda del bin E; None indica l'impulso gaussiano di larghezza `tau`
            e attiva le forme chiuse per i bagni piatto e gaussiano.
        tau_sep: Separazione temporale tra i due bin (s).
        tau: Larghezza dell'impulso; se omessa e' stimata da u.

    Returns:
        LossBackaction con q e C.
    """
    if tau_sep < 0:
        raise UsageError("tau_sep deve essere non negativo.", MODULE)
    if u is None and tau is None:
        raise UsageError("Serve la forma d'onda oppure la larghezza tau.", MODULE)
    if u is not None and not isinstance(u, Waveform):
        raise UsageError("u deve essere una Waveform normalizzata.", MODULE)
    tau = float(tau) if tau is not None else effective_width(u)

    if bath.variant == DISCRETE:
        g, dw, x = (np.array(col) for col in zip(*bath.tls))
        alpha_e = -1j * g * np.sqrt(tau) * np.exp(1j * dw * x / bath.speed) * waveform_amplitude(u, dw, tau)
        alpha_l = alpha_e * np.exp(-1j * dw * tau_sep)
        q = float(np.sum(np.abs(alpha_e) ** 2))
        c = complex(np.sum(alpha_e.conj() * alpha_l) / q) if q > 0 else 1.0 + 0j
    elif u is None and bath.variant in (FLAT, GAUSSIAN):
        q, c = _closed_form(bath, tau, tau_sep)
    else:
        omega = _quadrature_window(bath, tau)
        if u is None:
            spectrum = gaussian_spectral_density(tau)(omega)
        else:
            spectrum = np.abs(waveform_amplitude(u, omega, tau)) ** 2
        weight = bath.spectral_density(omega) * spectrum
        norm = trapezoid(weight, omega)
        q = float(tau * norm / (2 * np.pi))
        c = complex(trapezoid(weight * np.exp(-1j * omega * tau_sep), omega) / norm) if norm > 0 else 1.0 + 0j

    if abs(c) > 1.0:
        c = c / abs(c)
    if q > BORN_LIMIT:
        logger.warning(f"q = {q:.3f} > {BORN_LIMIT}: approssimazione di Born non affidabile.")
    return LossBackaction(q=q, coherence=c)


def apply_backaction(state: Union[PureState, DensityOp], coherence: complex,
                     compensate: bool = False, qubit: int = 0) -> DensityOp:
    """
    Stato a due qubit dopo la perdita del fotone: le coerenze tra i rami L (|g>)
    ed E (|e>) del qubit time-bin vengono moltiplicate per C.

    Con `compensate` applica exp(-i (phi/2) Z) sul qubit time-bin, con phi = arg C:
    il risultato e' un canale di dephasing (1 - eta) rho + eta Z rho Z, eta = (1 - |C|)/2.
    """
    if abs(coherence) > 1.0 + 1e-12:
        raise UsageError(f"|C| = {abs(coherence):.6f} > 1 non e' fisico.", MODULE)
    rho = state.dm() if isinstance(state, PureState) else state
    if tuple(rho.dims) != (2, 2):
        raise DimensionError(f"apply_backaction richiede dims (2, 2), ricevuto {rho.dims}", MODULE)
    if qubit not in (0, 1):
        raise UsageError("qubit deve essere 0 oppure 1.", MODULE)

    late = embed(transition(2, G, G), qubit, (2, 2)).entries
    early = embed(transition(2, E, E), qubit, (2, 2)).entries
    m = rho.entries
    out = late @ m @ late + early @ m @ early + coherence * late @ m @ early + np.conj(coherence) * early @ m @ late
    if compensate:
        phi = np.angle(coherence)
        rotation = embed(np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)]), qubit, (2, 2)).entries
        out = rotation @ out @ rotation.conj().T
    return DensityOp((2, 2), out, check=rho.check)


def sample_tls_bath(bath: BathSpec, n: int, rng: np.random.Generator,
                    tau: Optional[float] = None, length: float = 0.0) -> BathSpec:
    """
    Estrae n TLS con frequenze distribuite secondo J(omega) e accoppiamenti uguali,
    scelti in modo che 2 pi sum_j g_j^2 delta(omega - omega_j) riproduca J in media.

    Args:
        tau: Larghezza dell'impulso, necessaria per la finestra del bagno piatto.
        length: I TLS sono distribuiti uniformemente in [0, length] lungo la linea.
    """
    if n < 1:
        raise UsageError("Serve almeno un TLS.", MODULE)
    if bath.variant == GAUSSIAN:
        detunings = rng.normal(bath.detuning, bath.width, size=n)
        total = 2 * np.pi * bath.g ** 2
    elif bath.variant == FLAT:
        if tau is None:
            raise UsageError("Il bagno piatto richiede tau per fissare la finestra di campionamento.", MODULE)
        half = FREQUENCY_WINDOW / tau
        detunings = rng.uniform(-half, half, size=n)
        total = 2 * half * bath.j0
    elif bath.variant == TABULATED:
        cdf = cumulative_trapezoid(bath.density, bath.omega, initial=0.0)
        total = float(cdf[-1])
        if total <= 0:
            raise UsageError("La densita' tabulata ha integrale nullo.", MODULE)
        detunings = np.interp(rng.uniform(0.0, total, size=n), cdf, bath.omega)
    else:
        raise UsageError("Il campionamento richiede una variante continua.", MODULE)
    couplings = np.full(n, np.sqrt(total / (2 * np.pi * n)))
    positions = rng.uniform(0.0, length, size=n) if length > 0 else np.zeros(n)
    return BathSpec.discrete(couplings, detunings, positions)
