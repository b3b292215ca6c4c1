# core/qcore.py
"""
Algebra lineare quantistica con dimensioni etichettate.

Stati puri, operatori densita' e operatori lineari portano sempre con se' la lista
delle dimensioni dei sottosistemi (Dims). Tutte le strutture sono immutabili dopo
la costruzione, quindi possono essere condivise tra task concorrenti.
Convenzione globale: hbar = 1.
"""
import logging
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.exceptions import DimensionError, UsageError

logger = logging.getLogger(__name__)

MODULE = "qcore"

HERMITIAN_TOL = 1e-9
TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-8
NORM_TOL = 1e-9
XSTATE_TOL = 1e-12
WOOTTERS_RANK_TOL = 16 * np.finfo(float).eps

Dims = Tuple[int, ...]

# --- Matrici di Pauli ---
PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def make_dims(dims: Iterable[int]) -> Dims:
    """Valida e normalizza una lista di dimensioni dei sottosistemi."""
    dims = tuple(int(d) for d in dims)
    if not dims:
        raise DimensionError("La lista delle dimensioni e' vuota.", MODULE)
    if any(d < 1 for d in dims):
        raise DimensionError(f"Dimensioni non positive: {dims}", MODULE)
    return dims


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PureState:
    """Vettore di stato con dimensioni etichettate."""
    dims: Dims
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        dims = make_dims(self.dims)
        amps = _readonly(np.ravel(self.amplitudes))
        if amps.size != int(np.prod(dims)):
            raise DimensionError(
                f"Lunghezza {amps.size} incompatibile con le dimensioni {dims}", MODULE)
        if self.normalized and abs(np.linalg.norm(amps) - 1.0) > NORM_TOL:
            raise UsageError(f"Stato non normalizzato (norma {np.linalg.norm(amps):.3e})", MODULE)
        object.__setattr__(self, 'dims', dims)
        object.__setattr__(self, 'amplitudes', amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def dm(self) -> 'DensityOp':
        """Restituisce il proiettore |psi><psi|."""
        return DensityOp(self.dims, np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: 'PureState') -> complex:
        _check_same_dims(self.dims, other.dims)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def normalize(self) -> 'PureState':
        norm = np.linalg.norm(self.amplitudes)
        if norm == 0:
            raise UsageError("Impossibile normalizzare il vettore nullo.", MODULE)
        return PureState(self.dims, self.amplitudes / norm)


@dataclass(frozen=True)
class DensityOp:
    """
    Operatore densita'. Dopo ogni aritmetica la matrice viene simmetrizzata
    (rho + rho^dag)/2; la positivita' viene solo controllata, mai proiettata.
    """
    dims: Dims
    entries: np.ndarray
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        dims = make_dims(self.dims)
        rho = np.asarray(self.entries, dtype=complex)
        d = int(np.prod(dims))
        if rho.shape != (d, d):
            raise DimensionError(f"Forma {rho.shape} incompatibile con le dimensioni {dims}", MODULE)
        if self.check and np.max(np.abs(rho - rho.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise UsageError("La matrice densita' non e' hermitiana.", MODULE)
        rho = 0.5 * (rho + rho.conj().T)
        if self.check:
            tr = np.trace(rho).real
            if abs(tr - 1.0) > TRACE_TOL:
                raise UsageError(f"Traccia {tr:.12f} diversa da 1.", MODULE)
            min_eig = np.linalg.eigvalsh(rho)[0]
            if min_eig < -POSITIVITY_TOL:
                raise UsageError(f"Autovalore minimo negativo: {min_eig:.3e}", MODULE)
        object.__setattr__(self, 'dims', dims)
        object.__setattr__(self, 'entries', _readonly(rho))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def purity(self) -> float:
        return float(np.real(np.trace(self.entries @ self.entries)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def expect(self, op: Union['LinOp', np.ndarray]) -> complex:
        matrix = op.entries if isinstance(op, LinOp) else np.asarray(op)
        return complex(np.trace(matrix @ self.entries))

    def evolve(self, unitary: Union['LinOp', np.ndarray]) -> 'DensityOp':
        """Applica U rho U^dag."""
        u = unitary.entries if isinstance(unitary, LinOp) else np.asarray(unitary)
        return DensityOp(self.dims, u @ self.entries @ u.conj().T, check=self.check)


@dataclass(frozen=True)
class LinOp:
    """Operatore lineare su uno spazio con dimensioni etichettate."""
    dims: Dims
    entries: np.ndarray
    label: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        dims = make_dims(self.dims)
        d = int(np.prod(dims))
        mat = np.asarray(self.entries, dtype=complex)
        if mat.shape != (d, d):
            raise DimensionError(f"Forma {mat.shape} incompatibile con le dimensioni {dims}", MODULE)
        object.__setattr__(self, 'dims', dims)
        object.__setattr__(self, 'entries', _readonly(mat))

    def dag(self) -> 'LinOp':
        label = f"{self.label}^dag" if self.label else None
        return LinOp(self.dims, self.entries.conj().T, label)

    def __matmul__(self, other):
        if isinstance(other, LinOp):
            _check_same_dims(self.dims, other.dims)
            return LinOp(self.dims, self.entries @ other.entries)
        if isinstance(other, PureState):
            _check_same_dims(self.dims, other.dims)
            return PureState(other.dims, self.entries @ other.amplitudes, normalized=False)
        return NotImplemented

    def __add__(self, other: 'LinOp') -> 'LinOp':
        _check_same_dims(self.dims, other.dims)
        return LinOp(self.dims, self.entries + other.entries)

    def __sub__(self, other: 'LinOp') -> 'LinOp':
        _check_same_dims(self.dims, other.dims)
        return LinOp(self.dims, self.entries - other.entries)

    def __mul__(self, scalar: complex) -> 'LinOp':
        return LinOp(self.dims, scalar * self.entries, self.label)

    __rmul__ = __mul__

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0) <= tol)


def _check_same_dims(a: Dims, b: Dims):
    if tuple(a) != tuple(b):
        raise DimensionError(f"Dimensioni diverse: {a} contro {b}", MODULE)


# --- Costruttori elementari ---

def basis(d: int, i: int) -> np.ndarray:
    vec = np.zeros(d, dtype=complex)
    vec[i] = 1.0
    return vec


def ket(dims: Sequence[int], indices: Sequence[int]) -> PureState:
    """Stato prodotto della base computazionale |i1, i2, ...>."""
    dims = make_dims(dims)
    if len(indices) != len(dims):
        raise DimensionError("Numero di indici diverso dal numero di sottosistemi.", MODULE)
    vec = reduce(np.kron, [basis(d, i) for d, i in zip(dims, indices)])
    return PureState(dims, vec)


def transition(d: int, a: int, b: int) -> np.ndarray:
    """Operatore |a><b| su un sistema di dimensione d."""
    mat = np.zeros((d, d), dtype=complex)
    mat[a, b] = 1.0
    return mat


def destroy(n_levels: int) -> np.ndarray:
    """Operatore di distruzione bosonico troncato a n_levels livelli."""
    return np.diag(np.sqrt(np.arange(1, n_levels)), k=1).astype(complex)


def identity(dims: Sequence[int]) -> LinOp:
    dims = make_dims(dims)
    return LinOp(dims, np.eye(int(np.prod(dims))), "1")


def embed(local: np.ndarray, site: int, dims: Sequence[int], label: Optional[str] = None) -> LinOp:
    """Immerge un operatore locale sul sottosistema `site` dello spazio composto."""
    dims = make_dims(dims)
    local = np.asarray(local, dtype=complex)
    if local.shape != (dims[site], dims[site]):
        raise DimensionError(f"Operatore locale {local.shape} non compatibile con il sito {site}", MODULE)
    factors = [np.eye(d) for d in dims]
    factors[site] = local
    return LinOp(dims, reduce(np.kron, factors), label)


def pauli_word(word: str, sign: int = 1) -> LinOp:
    """Costruisce una parola di Pauli, es. 'ZIZIZI'."""
    table = {'I': PAULI_I, 'X': PAULI_X, 'Y': PAULI_Y, 'Z': PAULI_Z}
    try:
        mats = [table[c] for c in word.upper()]
    except KeyError as e:
        raise UsageError(f"Carattere di Pauli non valido: {e}", MODULE)
    return LinOp(tuple([2] * len(word)), sign * reduce(np.kron, mats), word.upper())


def maximally_mixed(dims: Sequence[int]) -> DensityOp:
    dims = make_dims(dims)
    d = int(np.prod(dims))
    return DensityOp(dims, np.eye(d) / d)


def random_pure(dims: Sequence[int], rng: np.random.Generator) -> PureState:
    """Stato puro distribuito secondo Haar (vettore gaussiano complesso normalizzato)."""
    dims = make_dims(dims)
    d = int(np.prod(dims))
    vec = rng.normal(size=d) + 1j * rng.normal(size=d)
    return PureState(dims, vec / np.linalg.norm(vec))


def random_density(dims: Sequence[int], rng: np.random.Generator, rank: Optional[int] = None) -> DensityOp:
    """Matrice densita' casuale (ensemble di Ginibre)."""
    dims = make_dims(dims)
    d = int(np.prod(dims))
    k = rank or d
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    rho = g @ g.conj().T
    return DensityOp(dims, rho / np.trace(rho).real)


# --- Operazioni ---

def tensor(factors: List[Union[LinOp, PureState, DensityOp]]):
    """
    Prodotto tensoriale (Kronecker) nell'ordine dato.

    Args:
        factors: Lista non vuota di oggetti dello stesso tipo.

    Returns:
        Un oggetto dello stesso tipo con le dimensioni concatenate.
    """
    if not factors:
        raise UsageError("tensor richiede almeno un fattore.", MODULE)
    kind = type(factors[0])
    if any(type(f) is not kind for f in factors):
        raise UsageError("tensor: tipi misti non ammessi.", MODULE)
    dims = tuple(d for f in factors for d in f.dims)
    if kind is PureState:
        vec = reduce(np.kron, [f.amplitudes for f in factors])
        normalized = all(f.normalized for f in factors)
        return PureState(dims, vec, normalized=normalized)
    if kind is DensityOp:
        return DensityOp(dims, reduce(np.kron, [f.entries for f in factors]))
    if kind is LinOp:
        return LinOp(dims, reduce(np.kron, [f.entries for f in factors]))
    raise UsageError(f"tensor: tipo non supportato {kind.__name__}", MODULE)


def partial_trace(rho: Union[DensityOp, PureState], keep: Iterable[int]) -> DensityOp:
    """
    Traccia parziale: restituisce lo stato ridotto sui sottosistemi in `keep`.
    """
    if isinstance(rho, PureState):
        rho = rho.dm()
    keep = sorted(set(int(k) for k in keep))
    n = len(rho.dims)
    if not keep:
        raise UsageError("partial_trace: l'insieme `keep` e' vuoto.", MODULE)
    if any(k < 0 or k >= n for k in keep):
        raise UsageError(f"partial_trace: indici fuori intervallo {keep} per {n} sottosistemi.", MODULE)

    tensor_rho = rho.entries.reshape(rho.dims + rho.dims)
    # Traccio dal sottosistema con indice piu' alto per non spostare gli assi rimanenti
    current_n = n
    for idx in reversed(range(n)):
        if idx in keep:
            continue
        tensor_rho = np.trace(tensor_rho, axis1=idx, axis2=idx + current_n)
        current_n -= 1
    kept_dims = tuple(rho.dims[k] for k in keep)
    d = int(np.prod(kept_dims))
    return DensityOp(kept_dims, tensor_rho.reshape(d, d), check=rho.check)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (matrix + matrix.conj().T))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(a: Union[PureState, DensityOp], b: Union[PureState, DensityOp]) -> float:
    """
    Fedelta' tra due stati: |<psi|phi>|^2, <psi|rho|psi> oppure la fedelta' di Uhlmann.
    """
    _check_same_dims(a.dims, b.dims)
    if isinstance(a, PureState) and isinstance(b, PureState):
        value = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2
    elif isinstance(a, PureState):
        value = np.real(np.vdot(a.amplitudes, b.entries @ a.amplitudes))
    elif isinstance(b, PureState):
        value = np.real(np.vdot(b.amplitudes, a.entries @ b.amplitudes))
    else:
        sqrt_a = _psd_sqrt(a.entries)
        inner = _psd_sqrt(sqrt_a @ b.entries @ sqrt_a)
        value = np.real(np.trace(inner)) ** 2
    return float(np.clip(value, 0.0, 1.0))


def is_x_state(rho: DensityOp, tol: float = XSTATE_TOL) -> bool:
    """Controlla se la matrice 4x4 ha la struttura a 'X'."""
    mask = np.array([[1, 0, 0, 1],
                     [0, 1, 1, 0],
                     [0, 1, 1, 0],
                     [1, 0, 0, 1]], dtype=bool)
    return bool(np.all(np.abs(rho.entries[~mask]) <= tol))


def concurrence_xstate(rho: DensityOp) -> float:
    """Forma chiusa per gli stati X: 2 max{0, |z| - sqrt(ad), |w| - sqrt(bc)}."""
    m = rho.entries
    a, b, c, d = (m[i, i].real for i in range(4))
    w, z = m[0, 3], m[1, 2]
    value = 2.0 * max(0.0,
                      abs(z) - np.sqrt(max(a * d, 0.0)),
                      abs(w) - np.sqrt(max(b * c, 0.0)))
    return float(min(value, 1.0))


def concurrence_wootters(rho: DensityOp) -> float:
    """
    Concorrenza di Wootters. Con rho = A A^dagger i lambda_i sono i valori
    singolari di A^T (Y x Y) A, senza radici di autovalori rumorosi.
    """
    entries = 0.5 * (rho.entries + rho.entries.conj().T)
    vals, vecs = np.linalg.eigh(entries)
    # autovalori a livello di arrotondamento: rango numerico
    keep = vals > WOOTTERS_RANK_TOL * max(vals.max(), 0.0)
    factor = vecs[:, keep] * np.sqrt(vals[keep])
    tau = factor.T @ np.kron(PAULI_Y, PAULI_Y) @ factor
    lambdas = np.zeros(4)
    singular = np.linalg.svd(tau, compute_uv=False)
    lambdas[:singular.size] = singular
    return float(np.clip(lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3], 0.0, 1.0))


def concurrence(rho: Union[DensityOp, PureState]) -> float:
    """
    Concorrenza di uno stato a due qubit. Usa la forma chiusa sugli stati X,
    altrimenti la formula generale di Wootters.
    """
    if isinstance(rho, PureState):
        rho = rho.dm()
    if tuple(rho.dims) != (2, 2):
        raise DimensionError(f"concurrence richiede dims (2, 2), ricevuto {rho.dims}", MODULE)
    if is_x_state(rho):
        return concurrence_xstate(rho)
    return concurrence_wootters(rho)
