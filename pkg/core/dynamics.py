# core/dynamics.py
"""
Integrazione dell'equazione maestra di Lindblad dipendente dal tempo,
composizione in cascata (SLH) e reti di modi virtuali di ingresso/uscita.

Il lato destro dell'equazione e' valutato come prodotti di matrici su rho:
nessun superoperatore viene mai materializzato.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp, trapezoid
from scipy.interpolate import CubicSpline

import config
from core.exceptions import NumericalFailure, UsageError
from core.qcore import DensityOp, Dims, LinOp, destroy, embed, make_dims

logger = logging.getLogger(__name__)

MODULE = "dynamics"

TRACE_DEVIATION_MAX = 1e-6
MIN_EIGENVALUE_MIN = -1e-5
WAVEFORM_NORM_TOL = 1e-10
FLOOR_CONVERGENCE_TOL = 1e-4


def _check_uniform(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise UsageError("La griglia temporale deve avere almeno due punti.", MODULE)
    steps = np.diff(grid)
    if np.any(steps <= 0):
        raise UsageError("La griglia temporale deve essere strettamente crescente.", MODULE)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * max(abs(steps[0]), 1e-300) + 1e-12 * np.max(np.abs(grid)):
        raise UsageError("La griglia temporale deve essere uniforme.", MODULE)
    return grid


class Envelope:
    """
    Inviluppo complesso campionato su griglia uniforme, interpolato a tratti con
    spline cubiche. I `breakpoints` dichiarano le discontinuita': l'interpolazione
    non attraversa mai un breakpoint e l'integratore riparte da ciascuno di essi.
    Fuori dalla griglia l'inviluppo vale zero.

    Se viene passata `fn`, l'inviluppo e' valutato puntualmente con `fn` e i
    campioni servono solo come tabulazione (accoppiamenti singolari ai bordi).
    """

    def __init__(self, grid: Sequence[float], samples: Sequence[complex],
                 breakpoints: Sequence[float] = (), fn: Optional[Callable[[float], complex]] = None):
        self.grid = _check_uniform(grid)
        self.samples = np.asarray(samples, dtype=complex)
        if self.samples.shape != self.grid.shape:
            raise UsageError("Campioni e griglia hanno lunghezze diverse.", MODULE)
        if not np.all(np.isfinite(self.samples)):
            raise UsageError("L'inviluppo contiene valori non finiti.", MODULE)
        self.breakpoints = tuple(sorted(float(b) for b in breakpoints
                                        if self.grid[0] < b < self.grid[-1]))
        self._fn = fn
        self._pieces = self._build_pieces() if fn is None else []

    def _build_pieces(self) -> List[Tuple[float, float, Callable]]:
        edges = [self.grid[0]] + list(self.breakpoints) + [np.inf]
        pieces = []
        for left, right in zip(edges[:-1], edges[1:]):
            mask = (self.grid >= left) & (self.grid < right)
            if left == edges[-2]:
                mask |= self.grid == self.grid[-1]
            t = self.grid[mask]
            y = self.samples[mask]
            if t.size == 0:
                continue
            if t.size == 1:
                value = complex(y[0])
                pieces.append((left, right, lambda x, v=value: np.full_like(np.asarray(x, float), v, dtype=complex)))
                continue
            spline_re = CubicSpline(t, y.real)
            spline_im = CubicSpline(t, y.imag)
            pieces.append((left, right, lambda x, a=spline_re, b=spline_im: a(x) + 1j * b(x)))
        return pieces

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], grid: Sequence[float],
                      breakpoints: Sequence[float] = ()) -> 'Envelope':
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.asarray(fn(grid), dtype=complex), breakpoints)

    @classmethod
    def from_callable(cls, fn: Callable[[float], complex], grid: Sequence[float],
                      breakpoints: Sequence[float] = ()) -> 'Envelope':
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.array([fn(t) for t in grid], dtype=complex), breakpoints, fn=fn)

    @classmethod
    def constant(cls, value: complex, t0: float, t1: float) -> 'Envelope':
        return cls(np.array([t0, t1]), np.array([value, value]))

    def __call__(self, t: float) -> complex:
        if t < self.grid[0] or t > self.grid[-1]:
            return 0.0j
        if self._fn is not None:
            return complex(self._fn(t))
        for left, right, piece in self._pieces:
            if left <= t < right:
                return complex(piece(t))
        return complex(self._pieces[-1][2](t))

    def conj(self) -> 'Envelope':
        fn = None if self._fn is None else (lambda t, f=self._fn: np.conj(f(t)))
        return Envelope(self.grid, self.samples.conj(), self.breakpoints, fn=fn)

    def __mul__(self, other: 'Envelope') -> 'Envelope':
        if not np.array_equal(self.grid, other.grid):
            raise UsageError("Prodotto di inviluppi su griglie diverse.", MODULE)
        fn = None
        if self._fn is not None or other._fn is not None:
            fn = lambda t, a=self, b=other: a(t) * b(t)
        return Envelope(self.grid, self.samples * other.samples,
                        sorted(set(self.breakpoints) | set(other.breakpoints)), fn=fn)

    def scaled(self, factor: complex) -> 'Envelope':
        fn = None if self._fn is None else (lambda t, f=self._fn: factor * f(t))
        return Envelope(self.grid, factor * self.samples, self.breakpoints, fn=fn)


@dataclass(frozen=True)
class Waveform:
    """Forma d'onda fotonica normalizzata in L2 su griglia uniforme."""
    grid: np.ndarray
    samples: np.ndarray

    def __post_init__(self):
        grid = _check_uniform(self.grid)
        samples = np.asarray(self.samples, dtype=complex)
        if samples.shape != grid.shape:
            raise UsageError("Campioni e griglia della forma d'onda hanno lunghezze diverse.", MODULE)
        norm = trapezoid(np.abs(samples) ** 2, grid)
        if abs(norm - 1.0) > WAVEFORM_NORM_TOL:
            raise UsageError(f"Forma d'onda non normalizzata: norma {norm:.12f}", MODULE)
        object.__setattr__(self, 'grid', grid)
        object.__setattr__(self, 'samples', samples)

    @classmethod
    def normalized(cls, grid: Sequence[float], samples: Sequence[complex]) -> 'Waveform':
        grid = np.asarray(grid, dtype=float)
        samples = np.asarray(samples, dtype=complex)
        norm = trapezoid(np.abs(samples) ** 2, grid)
        if norm <= 0:
            raise UsageError("Impossibile normalizzare una forma d'onda nulla.", MODULE)
        return cls(grid, samples / np.sqrt(norm))

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def head(self) -> np.ndarray:
        """int_{t0}^{t} |u|^2."""
        return cumulative_trapezoid(np.abs(self.samples) ** 2, self.grid, initial=0.0)

    def tail(self) -> np.ndarray:
        """int_{t}^{t_end} |u|^2."""
        head = self.head()
        return head[-1] - head

    def overlap(self, other: 'Waveform') -> complex:
        if not np.array_equal(self.grid, other.grid):
            raise UsageError("Sovrapposizione tra forme d'onda su griglie diverse.", MODULE)
        return complex(trapezoid(self.samples.conj() * other.samples, self.grid))

    def envelope(self) -> Envelope:
        return Envelope(self.grid, self.samples)


@dataclass(frozen=True)
class TimeDependentOp:
    """Operatore O(t) = O_static + sum_k f_k(t) O_k."""
    static: LinOp
    modulated: Tuple[Tuple[LinOp, Envelope], ...] = ()

    def __post_init__(self):
        for op, _ in self.modulated:
            if op.dims != self.static.dims:
                raise UsageError("Le parti modulate hanno dimensioni diverse dalla parte statica.", MODULE)
        object.__setattr__(self, 'modulated', tuple(self.modulated))

    @property
    def dims(self) -> Dims:
        return self.static.dims

    @classmethod
    def zero(cls, dims: Sequence[int]) -> 'TimeDependentOp':
        dims = make_dims(dims)
        d = int(np.prod(dims))
        return cls(LinOp(dims, np.zeros((d, d))))

    def matrix(self, t: float) -> np.ndarray:
        out = self.static.entries.copy()
        for op, env in self.modulated:
            coeff = env(t)
            if coeff != 0:
                out += coeff * op.entries
        return out

    @property
    def is_static(self) -> bool:
        return not self.modulated

    def breakpoints(self) -> List[float]:
        return [b for _, env in self.modulated for b in env.breakpoints]

    def __add__(self, other: 'TimeDependentOp') -> 'TimeDependentOp':
        return TimeDependentOp(self.static + other.static, self.modulated + other.modulated)


@dataclass(frozen=True)
class OpenSystem:
    """Hamiltoniana dipendente dal tempo piu' operatori di collasso."""
    hamiltonian: TimeDependentOp
    collapse: Tuple[TimeDependentOp, ...]
    dims: Dims

    def __post_init__(self):
        dims = make_dims(self.dims)
        if self.hamiltonian.dims != dims or any(c.dims != dims for c in self.collapse):
            raise UsageError("Dimensioni incoerenti tra gli operatori del sistema aperto.", MODULE)
        object.__setattr__(self, 'dims', dims)
        object.__setattr__(self, 'collapse', tuple(self.collapse))

    def breakpoints(self) -> List[float]:
        points = self.hamiltonian.breakpoints()
        for c in self.collapse:
            points.extend(c.breakpoints())
        return sorted(set(points))


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = config.ODE_RTOL
    atol: float = config.ODE_ATOL
    max_step: float = config.ODE_MAX_STEP
    method: str = "RK45"

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise UsageError("Le tolleranze dell'integratore devono essere positive.", MODULE)


@dataclass
class Trajectory:
    times: np.ndarray
    states: List[DensityOp]
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def final(self) -> DensityOp:
        return self.states[-1]

    def expect(self, op: LinOp) -> np.ndarray:
        return np.array([s.expect(op) for s in self.states])


def _make_rhs(system: OpenSystem):
    d = int(np.prod(system.dims))
    static_ops = []
    dynamic_ops = []
    for c in system.collapse:
        if c.is_static:
            L = c.static.entries
            static_ops.append((L, L.conj().T, L.conj().T @ L))
        else:
            dynamic_ops.append(c)
    static_h = system.hamiltonian.static.entries if system.hamiltonian.is_static else None

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        rho = y.reshape(d, d)
        h = static_h if static_h is not None else system.hamiltonian.matrix(t)
        out = -1j * (h @ rho - rho @ h)
        for L, Ld, LdL in static_ops:
            out += L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
        for c in dynamic_ops:
            L = c.matrix(t)
            Ld = L.conj().T
            LdL = Ld @ L
            out += L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
        return out.ravel()

    return rhs


def _snapshot(y: np.ndarray, dims: Dims, t: float) -> DensityOp:
    d = int(np.prod(dims))
    rho = y.reshape(d, d)
    if not np.all(np.isfinite(rho)):
        raise NumericalFailure("Rilevati NaN o infiniti nella traiettoria.", MODULE, time=t)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_DEVIATION_MAX:
        raise NumericalFailure(f"Deviazione della traccia {abs(tr - 1.0):.3e} oltre la soglia.", MODULE, time=t)
    min_eig = np.linalg.eigvalsh(rho)[0]
    if min_eig < MIN_EIGENVALUE_MIN:
        raise NumericalFailure(f"Autovalore minimo {min_eig:.3e} sotto la soglia.", MODULE, time=t)
    return DensityOp(dims, rho, check=False)


def evolve(system: OpenSystem, rho0: DensityOp, grid: Sequence[float],
           cfg: Optional[IntegratorConfig] = None,
           kicks: Optional[Dict[float, LinOp]] = None) -> Trajectory:
    """
    Integra l'equazione maestra con Runge-Kutta adattivo 5(4) direttamente su rho.

    Args:
        system: Il sistema aperto da integrare.
        rho0: Stato iniziale.
        grid: Istanti (crescenti) in cui salvare lo stato.
        cfg: Tolleranze e passo massimo.
        kicks: Unitarie istantanee applicate esattamente agli istanti indicati
            (impulsi pi ideali). Lo stato salvato a quell'istante e' quello dopo il kick.

    Returns:
        La traiettoria di DensityOp sulla griglia richiesta.
    """
    cfg = cfg or IntegratorConfig()
    kicks = dict(kicks or {})
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise UsageError("La griglia di evoluzione deve essere strettamente crescente.", MODULE)
    if rho0.dims != system.dims:
        raise UsageError(f"Stato iniziale con dims {rho0.dims}, sistema con dims {system.dims}.", MODULE)
    for u in kicks.values():
        if u.dims != system.dims:
            raise UsageError("Un kick ha dimensioni diverse dal sistema.", MODULE)

    t0, t1 = grid[0], grid[-1]
    cuts = {t0, t1}
    cuts.update(b for b in system.breakpoints() if t0 < b < t1)
    cuts.update(k for k in kicks if t0 <= k <= t1)
    cuts = sorted(cuts)

    rhs = _make_rhs(system)
    y = np.array(rho0.entries, dtype=complex).ravel()
    if t0 in kicks:
        u = kicks[t0].entries
        y = (u @ y.reshape(rho0.dim, rho0.dim) @ u.conj().T).ravel()

    states = [_snapshot(y, system.dims, t0)]
    n_steps = 0
    logger.debug(f"Integro {len(cuts) - 1} segmenti su dimensione {rho0.dim}")
    for left, right in zip(cuts[:-1], cuts[1:]):
        inside = grid[(grid > left) & (grid <= right)]
        t_eval = np.union1d(inside, [right])
        sol = solve_ivp(rhs, (left, right), y, method=cfg.method, t_eval=t_eval,
                        rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step)
        if sol.status < 0:
            stamp = float(sol.t[-1]) if sol.t.size else left
            raise NumericalFailure(f"Integrazione fallita: {sol.message}", MODULE, time=stamp)
        n_steps += int(sol.nfev)
        y = sol.y[:, -1]
        if right in kicks:
            u = kicks[right].entries
            d = rho0.dim
            y = (u @ y.reshape(d, d) @ u.conj().T).ravel()
        for k, t in enumerate(sol.t):
            if t in inside:
                column = y if t == right else sol.y[:, k]
                states.append(_snapshot(column, system.dims, float(t)))

    return Trajectory(times=grid.copy(), states=states,
                      metadata={"nfev": n_steps, "segments": len(cuts) - 1,
                                "rtol": cfg.rtol, "atol": cfg.atol})


# --- Composizione in cascata (formalismo SLH) ---

@dataclass(frozen=True)
class CascadeNode:
    system: OpenSystem
    mode: int
    kappa: float


def _lift(op: np.ndarray, node: int, node_dims: List[Dims]) -> np.ndarray:
    """Porta un operatore del nodo `node` nello spazio composto."""
    before = int(np.prod([np.prod(d) for d in node_dims[:node]])) if node else 1
    after = int(np.prod([np.prod(d) for d in node_dims[node + 1:]])) if node + 1 < len(node_dims) else 1
    return np.kron(np.kron(np.eye(before), op), np.eye(after))


def _lift_td(op: TimeDependentOp, node: int, node_dims: List[Dims], dims: Dims) -> TimeDependentOp:
    static = LinOp(dims, _lift(op.static.entries, node, node_dims))
    modulated = tuple((LinOp(dims, _lift(o.entries, node, node_dims)), env) for o, env in op.modulated)
    return TimeDependentOp(static, modulated)


def chain_terms(elements: List[Tuple[LinOp, Optional[Envelope], complex]],
                dims: Dims) -> Tuple[TimeDependentOp, TimeDependentOp]:
    """
    Prodotto in serie SLH di una catena di elementi c_k(t) A_k ordinati dal primo
    (a monte) all'ultimo (a valle).

    Ogni elemento e' (A_k, inviluppo oppure None, costante moltiplicativa).
    Restituisce il termine hamiltoniano (i/2) sum_{k<l} (c_k* c_l A_k^dag A_l - h.c.)
    e l'operatore di collasso collettivo L = sum_k c_k A_k.
    """
    d = int(np.prod(dims))
    zero = LinOp(dims, np.zeros((d, d)))
    h_static = np.zeros((d, d), dtype=complex)
    h_mod: List[Tuple[LinOp, Envelope]] = []
    l_static = np.zeros((d, d), dtype=complex)
    l_mod: List[Tuple[LinOp, Envelope]] = []

    for op, env, const in elements:
        if env is None:
            l_static += const * op.entries
        else:
            l_mod.append((op, env.scaled(const)))

    for k in range(len(elements)):
        for l in range(k + 1, len(elements)):
            a_k, env_k, c_k = elements[k]
            a_l, env_l, c_l = elements[l]
            term = a_k.entries.conj().T @ a_l.entries
            coeff = 0.5j * np.conj(c_k) * c_l
            if env_k is None and env_l is None:
                h_static += coeff * term + np.conj(coeff) * term.conj().T
                continue
            if env_k is None:
                env = env_l
            elif env_l is None:
                env = env_k.conj()
            else:
                env = env_k.conj() * env_l
            h_mod.append((LinOp(dims, term), env.scaled(coeff)))
            h_mod.append((LinOp(dims, term.conj().T), env.conj().scaled(np.conj(coeff))))

    hamiltonian = TimeDependentOp(LinOp(dims, h_static), tuple(h_mod))
    collapse = TimeDependentOp(LinOp(dims, l_static) if np.any(l_static) else zero, tuple(l_mod))
    return hamiltonian, collapse


def cascade(nodes: List[CascadeNode]) -> OpenSystem:
    """
    Compone nodi in cascata unidirezionale: collasso collettivo L0 = sum_j sqrt(k_j) a_j
    e termine di feedforward (i/2) sum_{i<j} sqrt(k_i k_j)(a_i^dag a_j - h.c.).
    """
    if not nodes:
        raise UsageError("cascade richiede almeno un nodo.", MODULE)
    node_dims = [n.system.dims for n in nodes]
    dims = tuple(d for nd in node_dims for d in nd)

    hamiltonian = TimeDependentOp.zero(dims)
    collapse: List[TimeDependentOp] = []
    elements = []
    for idx, node in enumerate(nodes):
        if node.kappa < 0:
            raise UsageError(f"kappa negativo per il nodo {idx}.", MODULE)
        hamiltonian = hamiltonian + _lift_td(node.system.hamiltonian, idx, node_dims, dims)
        collapse.extend(_lift_td(c, idx, node_dims, dims) for c in node.system.collapse)
        local_a = embed(destroy(node.system.dims[node.mode]), node.mode, node.system.dims).entries
        elements.append((LinOp(dims, _lift(local_a, idx, node_dims)), None, np.sqrt(node.kappa)))

    if any(n.kappa > 0 for n in nodes):
        feedforward, l0 = chain_terms(elements, dims)
        hamiltonian = hamiltonian + feedforward
        collapse.append(l0)
    logger.debug(f"Cascata di {len(nodes)} nodi, dimensione totale {int(np.prod(dims))}")
    return OpenSystem(hamiltonian, tuple(collapse), dims)


# --- Rete di modi virtuali di ingresso/uscita ---

def _weight_primitive(w: Waveform):
    """Primitiva esatta della spline di |w|^2: int_{t0}^{t} |w|^2 valutabile in ogni t."""
    return CubicSpline(w.grid, np.abs(w.samples) ** 2).antiderivative()


def input_coupling(u: Waveform, floor: float = config.LAMBDA_FLOOR) -> Envelope:
    """
    lambda_u(t) = u(t) / sqrt(int_t^inf |u|^2), denominatore limitato dal basso
    da floor * norma totale. Valutato puntualmente: la singolarita' a t_end non
    passa mai attraverso l'interpolazione.
    """
    shape = u.envelope()
    primitive = _weight_primitive(u)
    total = float(primitive(u.grid[-1]))
    bound = floor * total

    def coupling(t: float) -> complex:
        return shape(t) / np.sqrt(max(total - float(primitive(t)), bound))

    return Envelope.from_callable(coupling, u.grid)


def output_coupling(v: Waveform, floor: float = config.LAMBDA_FLOOR, index: int = 1) -> Envelope:
    """
    lambda_{v_i}(t) = (-1)^i v_i(t) / sqrt(int_0^t |v_i|^2), con lo stesso pavimento
    di `input_coupling`. Il segno (-1)^i fissa la fase dell'ampiezza catturata:
    <a_{v_i}> finale = (-1)^(i-1) <v_i|campo uscente>.
    """
    shape = v.envelope()
    primitive = _weight_primitive(v)
    bound = floor * float(primitive(v.grid[-1]))
    sign = -1.0 if index % 2 else 1.0

    def coupling(t: float) -> complex:
        return sign * shape(t) / np.sqrt(max(float(primitive(t)), bound))

    return Envelope.from_callable(coupling, v.grid)


def io_mode_network(u: Waveform, v_outputs: List[Waveform], kappa1: float, kappa2: float,
                    core: OpenSystem, cavity_index: int,
                    floor: float = config.LAMBDA_FLOOR,
                    n_levels: int = 3) -> Tuple[OpenSystem, Dict[str, object]]:
    """
    Aggiunge un modo bosonico per ogni forma d'onda (ingresso u, uscite v_1, v_2)
    al sistema `core` con cavita' sul sottosistema `cavity_index`.

    Canale 1: u -> cavita' (sqrt(kappa1)) -> v_1. Canale 2: cavita' (sqrt(kappa2)) -> v_2.
    Il modo a_{v_i} cattura (-1)^(i-1) volte la proiezione del campo uscente dalla
    porta i sulla sua forma d'onda.

    Returns:
        Il sistema aperto esteso (ordine: core, a_u, a_v1, a_v2) e i metadati
        con il pavimento usato per la regolarizzazione.
    """
    if kappa1 < 0 or kappa2 < 0:
        raise UsageError("I rate kappa1 e kappa2 devono essere non negativi.", MODULE)
    if not 1 <= len(v_outputs) <= 2:
        raise UsageError("io_mode_network accetta una o due forme d'onda di uscita.", MODULE)
    for w in [u, *v_outputs]:
        if not isinstance(w, Waveform):
            raise UsageError("Le forme d'onda devono essere oggetti Waveform normalizzati.", MODULE)
    if floor <= 0:
        raise UsageError("Il pavimento di regolarizzazione deve essere positivo.", MODULE)

    n_virtual = 1 + len(v_outputs)
    dims = tuple(core.dims) + (n_levels,) * n_virtual
    extra = int(n_levels ** n_virtual)

    def grow(op: np.ndarray) -> np.ndarray:
        return np.kron(op, np.eye(extra))

    hamiltonian = TimeDependentOp(
        LinOp(dims, grow(core.hamiltonian.static.entries)),
        tuple((LinOp(dims, grow(o.entries)), env) for o, env in core.hamiltonian.modulated))
    collapse = [TimeDependentOp(LinOp(dims, grow(c.static.entries)),
                                tuple((LinOp(dims, grow(o.entries)), env) for o, env in c.modulated))
                for c in core.collapse]

    a = LinOp(dims, grow(embed(destroy(core.dims[cavity_index]), cavity_index, core.dims).entries))
    virtual = [embed(destroy(n_levels), len(core.dims) + k, dims) for k in range(n_virtual)]
    a_u, a_vs = virtual[0], virtual[1:]

    lam_u = input_coupling(u, floor)
    lam_vs = [output_coupling(v, floor, index=i + 1) for i, v in enumerate(v_outputs)]

    channel1 = [(a_u, lam_u, 1.0), (a, None, np.sqrt(kappa1)), (a_vs[0], lam_vs[0], 1.0)]
    h1, l1 = chain_terms(channel1, dims)
    hamiltonian = hamiltonian + h1
    collapse.append(l1)
    if kappa2 > 0 or len(a_vs) > 1:
        channel2 = [(a, None, np.sqrt(kappa2))]
        if len(a_vs) > 1:
            channel2.append((a_vs[1], lam_vs[1], 1.0))
        h2, l2 = chain_terms(channel2, dims)
        hamiltonian = hamiltonian + h2
        collapse.append(l2)

    metadata = {"lambda_floor": floor,
                "lambda_floor_note": "denominatori di lambda_u e lambda_v limitati dal basso",
                "n_virtual": n_virtual,
                "capture_signs": [(-1) ** (i - 1) for i in range(1, len(v_outputs) + 1)]}
    logger.info(f"Rete di modi virtuali costruita: dims {dims}, pavimento {floor:.1e}")
    return OpenSystem(hamiltonian, tuple(collapse), dims), metadata


def mode_amplitudes(rho: DensityOp, first: int) -> np.ndarray:
    """<a_k> per i sottosistemi da `first` in poi (i modi virtuali della rete)."""
    return np.array([rho.expect(embed(destroy(rho.dims[k]), k, rho.dims))
                     for k in range(first, len(rho.dims))])


def floor_convergence(build: Callable[[float], Tuple[OpenSystem, Dict[str, object]]], rho0: DensityOp,
                      grid: Sequence[float], floors: Sequence[float] = (1e-6, config.LAMBDA_FLOOR),
                      cfg: Optional[IntegratorConfig] = None) -> Dict[str, object]:
    """
    Verifica che le ampiezze dei modi virtuali non dipendano dal pavimento di
    regolarizzazione: integra la rete costruita da `build(floor)` per ogni valore.

    Returns:
        Ampiezze per pavimento, variazione massima e flag `converged` (< FLOOR_CONVERGENCE_TOL).
    """
    amplitudes = []
    for floor in floors:
        system, meta = build(floor)
        first = len(system.dims) - int(meta["n_virtual"])
        final = evolve(system, rho0, grid, cfg).final
        amplitudes.append(mode_amplitudes(final, first))
    change = float(max(np.max(np.abs(a - amplitudes[-1])) for a in amplitudes))
    report = {"floors": list(floors), "amplitudes": amplitudes, "change": change,
              "converged": change < FLOOR_CONVERGENCE_TOL}
    if not report["converged"]:
        logger.warning(f"Ampiezze dei modi virtuali non convergenti nel pavimento: variazione {change:.2e}")
    return report
