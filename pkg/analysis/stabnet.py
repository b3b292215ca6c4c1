# analysis/stabnet.py
"""
Rete a tre nodi basata sullo stato "tetraedro" a sei qubit: preparazione con
parity check a peso 3, decodifica della sindrome, witness di entanglement e
teletrasporto controllato di uno stato a due qubit.
"""
import logging
from dataclasses import dataclass, field
from functools import reduce
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from analysis.flyingcat import CheckConfig
from core.exceptions import CqedError, UsageError
from core.qcore import PAULI_I, PAULI_X, PAULI_Y, PAULI_Z, DensityOp, PureState, ket

logger = logging.getLogger(__name__)

MODULE = "stabnet"

N_QUBITS = 6
SIX_QUBITS = (2,) * N_QUBITS

_SINGLE = {'I': PAULI_I, 'X': PAULI_X, 'Y': PAULI_Y, 'Z': PAULI_Z}

# Prodotto di due Pauli a singolo sito: (risultato, esponente k della fase i^k)
_PRODUCT = {
    ('X', 'Y'): ('Z', 1), ('Y', 'X'): ('Z', 3),
    ('Y', 'Z'): ('X', 1), ('Z', 'Y'): ('X', 3),
    ('Z', 'X'): ('Y', 1), ('X', 'Z'): ('Y', 3),
}


@dataclass(frozen=True)
class PauliString:
    """
    Parola di Pauli su n siti con fase globale i^phase.

    Per le parole hermitiane phase e' 0 o 2, cioe' segno +1 o -1.
    """
    word: str
    phase: int = 0

    def __post_init__(self):
        word = self.word.upper()
        if any(c not in _SINGLE for c in word):
            raise UsageError(f"Parola di Pauli non valida: '{self.word}'", MODULE)
        object.__setattr__(self, 'word', word)
        object.__setattr__(self, 'phase', self.phase % 4)

    @classmethod
    def from_label(cls, label: str) -> 'PauliString':
        """Accetta etichette come 'ZIZIZI' o '-XXIIII'."""
        label = label.strip()
        if label.startswith('-'):
            return cls(label[1:], 2)
        return cls(label.lstrip('+'))

    @classmethod
    def from_sites(cls, kind: str, sites: Sequence[int], n: int = N_QUBITS) -> 'PauliString':
        """Pauli `kind` sui siti indicati (numerati da 1)."""
        chars = ['I'] * n
        for site in sites:
            if not 1 <= site <= n:
                raise UsageError(f"Sito {site} fuori da 1..{n}", MODULE)
            chars[site - 1] = kind
        return cls(''.join(chars))

    @property
    def sign(self) -> complex:
        return 1j ** self.phase

    @property
    def n(self) -> int:
        return len(self.word)

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(i + 1 for i, c in enumerate(self.word) if c != 'I')

    @property
    def is_hermitian(self) -> bool:
        return self.phase % 2 == 0

    def matrix(self) -> np.ndarray:
        return self.sign * reduce(np.kron, [_SINGLE[c] for c in self.word])

    def commutes(self, other: 'PauliString') -> bool:
        return pauli_commutes(self, other)

    def __mul__(self, other: 'PauliString') -> 'PauliString':
        if self.n != other.n:
            raise UsageError("Parole di Pauli di lunghezza diversa.", MODULE)
        phase = self.phase + other.phase
        chars = []
        for a, b in zip(self.word, other.word):
            if a == 'I':
                chars.append(b)
            elif b == 'I':
                chars.append(a)
            elif a == b:
                chars.append('I')
            else:
                c, k = _PRODUCT[(a, b)]
                chars.append(c)
                phase += k
        return PauliString(''.join(chars), phase)

    def __str__(self) -> str:
        prefix = {0: '+', 1: '+i', 2: '-', 3: '-i'}[self.phase]
        return prefix + self.word


IDENTITY = PauliString('I' * N_QUBITS)


def pauli_commutes(a: PauliString, b: PauliString) -> bool:
    """Due parole commutano se anticommutano su un numero pari di siti."""
    clashes = sum(1 for x, y in zip(a.word, b.word) if x != 'I' and y != 'I' and x != y)
    return clashes % 2 == 0


def _stabilizers() -> Tuple[PauliString, ...]:
    gens = (
        PauliString.from_sites('Z', (1, 3, 5)),
        PauliString.from_sites('Z', (1, 4, 6)),
        PauliString.from_sites('Z', (2, 4, 5)),
        PauliString.from_sites('X', (1, 3, 6)),
        PauliString.from_sites('X', (1, 4, 5)),
        PauliString.from_sites('X', (2, 3, 5)),
    )
    for i, a in enumerate(gens):
        for b in gens[i + 1:]:
            if not a.commutes(b):
                raise CqedError(f"Stabilizzatori non commutanti: {a} e {b}", MODULE)
    return gens


STABILIZERS = _stabilizers()
Z_CHECKS = STABILIZERS[:3]
X_CHECKS = STABILIZERS[3:]

# Sindromi degli errori di classe I: qubit j -> (sigma_1, sigma_2, sigma_3 | sigma_4, sigma_5, sigma_6)
CLASS_I_SYNDROMES = {
    1: (-1, -1, +1, -1, -1, +1),
    2: (+1, +1, -1, +1, +1, -1),
    3: (-1, +1, +1, -1, +1, -1),
    4: (+1, -1, -1, +1, -1, +1),
    5: (-1, +1, -1, +1, -1, -1),
    6: (+1, -1, +1, -1, +1, +1),
}
CLASS_II_PAIR = (1, 2)
NODE_PAIRS = ((1, 2), (3, 4), (5, 6))

Syndrome = Tuple[int, ...]


# --- Stati di Bell e stato tetraedro ---

def bell_basis() -> Dict[str, np.ndarray]:
    """Base di Bell nell'ordine dei coefficienti (a, b, c, d): Phi+, Psi+, Psi-, Phi-."""
    s = 1 / np.sqrt(2)
    return {
        "Phi+": np.array([s, 0, 0, s], dtype=complex),
        "Psi+": np.array([0, s, s, 0], dtype=complex),
        "Psi-": np.array([0, s, -s, 0], dtype=complex),
        "Phi-": np.array([s, 0, 0, -s], dtype=complex),
    }


BELL_LABELS = ("Phi+", "Psi+", "Psi-", "Phi-")


def tetrahedron_state() -> PureState:
    """|T> = (1/2) sum_beta |beta>_12 |beta>_34 |beta>_56."""
    vector = sum(np.kron(np.kron(b, b), b) for b in bell_basis().values()) / 2
    return PureState(SIX_QUBITS, vector)


def stabilizer_projector(checks: Sequence[PauliString]) -> np.ndarray:
    dim = 2 ** checks[0].n
    return reduce(lambda acc, s: acc @ (np.eye(dim) + s.matrix()) / 2, checks, np.eye(dim))


# --- Misura di operatori di Pauli ---

@dataclass(frozen=True)
class MeasurementNoise:
    """
    q: probabilita' di riportare l'esito sbagliato; p1, p2: errori di backaction
    E1 sugli ultimi due qubit del check e E2 sull'ultimo.
    """
    q: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if not all(0 <= v <= 1 for v in (self.q, self.p1, self.p2)):
            raise UsageError("Le probabilita' di errore devono stare in [0, 1].", MODULE)

    @classmethod
    def from_check(cls, cfg: CheckConfig) -> 'MeasurementNoise':
        return cls(cfg.p_M, cfg.p1, cfg.p2)

    @property
    def is_noiseless(self) -> bool:
        return self.q == 0 and self.p1 == 0 and self.p2 == 0


NOISELESS = MeasurementNoise()


def backaction_errors(check: PauliString, noise: MeasurementNoise) -> List[Tuple[float, PauliString]]:
    """Errori di backaction del check: Z per check in base Z, X per check in base X."""
    kind = next(c for c in check.word if c != 'I')
    support = check.support
    if len(support) < 2:
        return [(noise.p2, PauliString.from_sites(kind, support[-1:], check.n))]
    return [
        (noise.p1, PauliString.from_sites(kind, support[-2:], check.n)),
        (noise.p2, PauliString.from_sites(kind, support[-1:], check.n)),
    ]


def _apply_channel(rho: np.ndarray, errors: List[Tuple[float, PauliString]]) -> np.ndarray:
    for p, error in errors:
        if p > 0:
            op = error.matrix()
            rho = (1 - p) * rho + p * op @ rho @ op.conj().T
    return rho


def _measure(state: Union[PureState, DensityOp], P: PauliString, noise: MeasurementNoise,
             rng: np.random.Generator) -> Tuple[int, int, Union[PureState, DensityOp]]:
    if not P.is_hermitian:
        raise UsageError(f"L'operatore {P} non e' hermitiano.", MODULE)
    if state.dim != 2 ** P.n:
        raise UsageError(f"Stato di dimensione {state.dim} per una parola di {P.n} siti.", MODULE)
    projectors = {s: (np.eye(state.dim) + s * P.matrix()) / 2 for s in (1, -1)}

    if isinstance(state, PureState):
        branches = {s: projectors[s] @ state.amplitudes for s in (1, -1)}
        p_plus = float(np.linalg.norm(branches[1]) ** 2)
    else:
        branches = {s: projectors[s] @ state.entries @ projectors[s] for s in (1, -1)}
        p_plus = float(np.real(np.trace(branches[1])))
    p_plus = min(max(p_plus, 0.0), 1.0)
    if p_plus > 1 - 1e-12:
        true_outcome = 1
    elif p_plus < 1e-12:
        true_outcome = -1
    else:
        true_outcome = 1 if rng.random() < p_plus else -1
    prob = p_plus if true_outcome == 1 else 1 - p_plus

    errors = backaction_errors(P, noise)
    if isinstance(state, PureState):
        vector = branches[true_outcome] / np.sqrt(prob)
        for p, error in errors:
            if p > 0 and rng.random() < p:
                vector = error.matrix() @ vector
        post = PureState(state.dims, vector / np.linalg.norm(vector))
    else:
        post = DensityOp(state.dims, _apply_channel(branches[true_outcome] / prob, errors))

    reported = true_outcome
    if noise.q > 0 and rng.random() < noise.q:
        reported = -true_outcome
    logger.debug("Misura di %s: esito vero %+d, riportato %+d (p+ = %.3f)", P, true_outcome, reported, p_plus)
    return true_outcome, reported, post


def measure_pauli(state: Union[PureState, DensityOp], P: PauliString,
                  noise: MeasurementNoise = NOISELESS,
                  rng: Optional[np.random.Generator] = None) -> Tuple[int, Union[PureState, DensityOp]]:
    """
    Misura proiettiva QND di una parola di Pauli hermitiana.

    Args:
        state: Stato puro o matrice densita' con dims (2,)*n.
        P: Operatore misurato.
        noise: Errori di lettura e di backaction.
        rng: Generatore; serve solo quando l'esito non e' deterministico.

    Returns:
        (esito riportato, stato post-misura). Per uno stato puro gli errori di
        backaction vengono campionati, per una matrice densita' sono applicati
        come canale.
    """
    rng = rng if rng is not None else np.random.default_rng()
    _, reported, post = _measure(state, P, noise, rng)
    return reported, post


# --- Decodifica ---

def decode(half: Sequence[int], error_type: str) -> PauliString:
    """
    Correzione dedotta da meta' sindrome.

    Args:
        half: (sigma_1, sigma_2, sigma_3) per errori X oppure (sigma_4, sigma_5, sigma_6) per errori Z.
        error_type: 'X' o 'Z', il tipo di errore da correggere.

    Returns:
        Parola di Pauli di correzione: identita', singolo qubit (classe I) o
        coppia (1, 2) (classe II).
    """
    error_type = error_type.upper()
    if error_type not in ('X', 'Z'):
        raise UsageError(f"Tipo di errore sconosciuto: '{error_type}'", MODULE)
    half = tuple(int(s) for s in half)
    if len(half) != 3 or any(s not in (1, -1) for s in half):
        raise UsageError(f"Sindrome non valida: {half}", MODULE)
    if half == (1, 1, 1):
        return IDENTITY
    if half == (-1, -1, -1):
        return PauliString.from_sites(error_type, CLASS_II_PAIR)
    offset = 0 if error_type == 'X' else 3
    for qubit, row in CLASS_I_SYNDROMES.items():
        if row[offset:offset + 3] == half:
            return PauliString.from_sites(error_type, (qubit,))
    raise CqedError(f"Sindrome {half} non presente nella tabella di decodifica.", MODULE)


@dataclass
class Preparation:
    state: Union[PureState, DensityOp]
    syndrome: Syndrome
    true_syndrome: Syndrome
    corrections: List[PauliString] = field(default_factory=list)


def _apply_pauli(state: Union[PureState, DensityOp], P: PauliString) -> Union[PureState, DensityOp]:
    if P.word == IDENTITY.word:
        return state
    if isinstance(state, PureState):
        return PureState(state.dims, P.matrix() @ state.amplitudes)
    return state.evolve(P.matrix())


def prepare_tetrahedron(initial: Union[PureState, DensityOp], noise: MeasurementNoise = NOISELESS,
                        rng: Optional[np.random.Generator] = None) -> Preparation:
    """
    Misura S1..S6 e corregge gli esiti -1 come una sindrome.

    I check in base Z (S1..S3) rilevano errori X, quelli in base X (S4..S6)
    rilevano errori Z; gli errori introdotti dall'ultimo giro di check restano.
    """
    rng = rng if rng is not None else np.random.default_rng()
    state = initial
    reported, true = [], []
    corrections = []
    for checks, error_type in ((Z_CHECKS, 'X'), (X_CHECKS, 'Z')):
        half = []
        for check in checks:
            actual, outcome, state = _measure(state, check, noise, rng)
            half.append(outcome)
            reported.append(outcome)
            true.append(actual)
        correction = decode(half, error_type)
        corrections.append(correction)
        state = _apply_pauli(state, correction)
    logger.info("Sindrome riportata %s, correzioni %s", tuple(reported), [str(c) for c in corrections])
    return Preparation(state, tuple(reported), tuple(true), corrections)


def prepare_tetrahedron_average(initial: Union[PureState, DensityOp],
                                noise: MeasurementNoise = NOISELESS) -> Tuple[DensityOp, Dict[str, Dict[Syndrome, float]]]:
    """
    Media d'insieme della preparazione su tutti gli esiti veri e riportati.

    Returns:
        (stato medio, distribuzioni delle mezze sindromi riportate per i check "Z" e "X").
    """
    rho = initial.dm().entries if isinstance(initial, PureState) else initial.entries
    halves: Dict[str, Dict[Syndrome, float]] = {}
    for checks, error_type in ((Z_CHECKS, 'X'), (X_CHECKS, 'Z')):
        branches: Dict[Syndrome, np.ndarray] = {(): rho}
        for check in checks:
            projectors = {s: (np.eye(rho.shape[0]) + s * check.matrix()) / 2 for s in (1, -1)}
            errors = backaction_errors(check, noise)
            updated: Dict[Syndrome, np.ndarray] = {}
            for prefix, branch in branches.items():
                for t in (1, -1):
                    projected = _apply_channel(projectors[t] @ branch @ projectors[t], errors)
                    for r in (1, -1):
                        weight = (1 - noise.q) if r == t else noise.q
                        if weight == 0:
                            continue
                        key = prefix + (r,)
                        updated[key] = updated.get(key, 0) + weight * projected
            branches = updated
        rho = np.zeros_like(rho)
        half_probs = {}
        for half, branch in branches.items():
            op = decode(half, error_type).matrix()
            rho = rho + op @ branch @ op.conj().T
            half_probs[half] = float(np.real(np.trace(branch)))
        halves["Z" if error_type == 'X' else "X"] = half_probs
    return DensityOp(SIX_QUBITS, rho), halves


# --- Witness ---

def witness(state: Optional[Union[PureState, DensityOp]] = None,
            noise: Optional[MeasurementNoise] = None) -> Dict[str, float]:
    """
    Witness di entanglement multipartito per |T>.

    Args:
        state: Stato a sei qubit. Se assente e noise e' dato, simulo la
               preparazione media partendo da |000000>.
        noise: (q = p_M, p1, p2) per la stima al primo ordine.

    Returns:
        Dizionario con il valore del witness a proiettore, quello a due
        impostazioni, la fedelta' F = 1/2 - <W> e, se noise e' dato, la stima
        -1/2 + [1 - (1 - p_M)^6] + 3(p1 + p2).
    """
    result: Dict[str, float] = {}
    if noise is not None:
        result["estimate"] = -0.5 + (1 - (1 - noise.q) ** 6) + 3 * (noise.p1 + noise.p2)
        if state is None:
            state, _ = prepare_tetrahedron_average(ket(SIX_QUBITS, (0,) * N_QUBITS), noise)
    if state is None:
        raise UsageError("Serve uno stato oppure un modello di rumore.", MODULE)
    rho = state.dm() if isinstance(state, PureState) else state
    target = tetrahedron_state().amplitudes
    fid = float(np.real(np.vdot(target, rho.entries @ target)))
    two_setting = 1.5 - np.real(rho.expect(stabilizer_projector(Z_CHECKS))) \
        - np.real(rho.expect(stabilizer_projector(X_CHECKS)))
    result.update({
        "projector": 0.5 - fid,
        "two_setting": float(two_setting),
        "fidelity": fid,
    })
    return result


# --- Teletrasporto controllato ---

@dataclass(frozen=True)
class TeleportInput:
    """Coefficienti di |phi> = a|Phi+> + b|Psi+> + c|Psi-> + d|Phi->."""
    a: complex
    b: complex = 0.0
    c: complex = 0.0
    d: complex = 0.0

    def __post_init__(self):
        norm = abs(self.a) ** 2 + abs(self.b) ** 2 + abs(self.c) ** 2 + abs(self.d) ** 2
        if abs(norm - 1) > 1e-9:
            raise UsageError(f"Stato da teletrasportare non normalizzato (norma^2 = {norm:.6f}).", MODULE)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=complex)

    def vector(self) -> np.ndarray:
        basis = bell_basis()
        return sum(coef * basis[label] for coef, label in zip(self.coefficients, BELL_LABELS))

    @classmethod
    def haar(cls, rng: np.random.Generator) -> 'TeleportInput':
        z = rng.normal(size=4) + 1j * rng.normal(size=4)
        z /= np.linalg.norm(z)
        return cls(*z)


# Correzioni di Bob: esito di Bell di Alice -> operatore a singolo qubit
ALICE_CORRECTIONS = {
    "Phi+": PAULI_I,
    "Psi+": PAULI_X,
    "Phi-": PAULI_Z,
    "Psi-": PAULI_Z @ PAULI_X,
}

# Esito di Charlie (Z sul qubit 5, X sul qubit 6) -> correzione sui qubit 3, 4
CHARLIE_CORRECTIONS = {
    (0, '+'): np.kron(PAULI_I, PAULI_I),
    (0, '-'): np.kron(PAULI_Z, PAULI_Z),
    (1, '+'): np.kron(PAULI_X, PAULI_X),
    (1, '-'): np.kron(PAULI_Z, PAULI_Z) @ np.kron(PAULI_X, PAULI_X),
}

_Z_BASIS = {0: np.array([1, 0], dtype=complex), 1: np.array([0, 1], dtype=complex)}
_X_BASIS = {'+': np.array([1, 1], dtype=complex) / np.sqrt(2), '-': np.array([1, -1], dtype=complex) / np.sqrt(2)}


def _measure_axes(psi: np.ndarray, axes: Tuple[int, ...], outcomes: Dict[Any, np.ndarray],
                  rng: np.random.Generator) -> Tuple[Any, np.ndarray, float]:
    """Misura i sottosistemi `axes` del tensore psi nella base data e restituisce il resto."""
    labels = list(outcomes)
    remnants, probs = [], []
    for label in labels:
        bra = outcomes[label].conj().reshape((2,) * len(axes))
        rest = np.tensordot(bra, psi, axes=(list(range(len(axes))), list(axes)))
        remnants.append(rest)
        probs.append(float(np.sum(np.abs(rest) ** 2)))
    probs = np.array(probs) / sum(probs)
    k = int(rng.choice(len(labels), p=probs))
    return labels[k], remnants[k] / np.linalg.norm(remnants[k]), float(probs[k])


def controlled_teleport(phi: TeleportInput, cooperate: bool = True,
                        rng: Optional[np.random.Generator] = None) -> Dict[str, Any]:
    """
    Teletrasporto di uno stato a due qubit con |T> come risorsa.

    Alice tiene A1, A2 e i qubit 1, 2; Bob i qubit 3, 4; Charlie i qubit 5, 6.

    Returns:
        Dizionario con la fedelta' dello stato di Bob e la trascrizione degli esiti.
    """
    rng = rng if rng is not None else np.random.default_rng()
    bell = {label: v for label, v in bell_basis().items()}
    # assi: A1, A2, q1..q6
    psi = np.kron(phi.vector(), tetrahedron_state().amplitudes).reshape((2,) * 8)

    alice1, psi, p1 = _measure_axes(psi, (0, 2), bell, rng)      # resta A2, q2..q6
    alice2, psi, p2 = _measure_axes(psi, (0, 1), bell, rng)      # resta q3..q6
    correction = np.kron(ALICE_CORRECTIONS[alice1], ALICE_CORRECTIONS[alice2])
    bob = np.tensordot(correction.reshape(2, 2, 2, 2), psi, axes=([2, 3], [0, 1]))

    transcript: Dict[str, Any] = {"alice": (alice1, alice2), "probabilities": [p1, p2]}
    target = phi.vector()
    if cooperate:
        charlie_basis = {(z, x): np.kron(_Z_BASIS[z], _X_BASIS[x]) for z in (0, 1) for x in ('+', '-')}
        bob_reordered = np.moveaxis(bob, [2, 3], [0, 1])
        outcome, remnant, p3 = _measure_axes(bob_reordered, (0, 1), charlie_basis, rng)
        final = CHARLIE_CORRECTIONS[outcome] @ remnant.reshape(4)
        fid = float(abs(np.vdot(target, final)) ** 2)
        transcript["charlie"] = outcome
        transcript["probabilities"].append(p3)
    else:
        matrix = bob.reshape(4, 4)
        rho_b = matrix @ matrix.conj().T
        fid = float(np.real(np.vdot(target, rho_b @ target)))
        transcript["rho_bob"] = rho_b
    logger.debug("Teletrasporto: esiti %s, fedelta' %.6f", transcript.get("alice"), fid)
    return {"fidelity": fid, "transcript": transcript}


def average_fidelity(M: int, cooperate: bool = False, seed: int = 0) -> Tuple[float, float]:
    """Fedelta' media su M stati di Haar: (media, errore standard)."""
    if M < 2:
        raise UsageError("Servono almeno due campioni per la media.", MODULE)
    children = np.random.SeedSequence(seed).spawn(2)
    input_rng = np.random.Generator(np.random.Philox(children[0]))
    outcome_rng = np.random.Generator(np.random.Philox(children[1]))
    values = np.array([
        controlled_teleport(TeleportInput.haar(input_rng), cooperate, outcome_rng)["fidelity"]
        for _ in range(M)
    ])
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(M))


def fidelity_form(cooperate: bool = False) -> np.ndarray:
    """
    Matrice Q con F = p^T Q p, p_beta = |c_beta|^2 pesi di Bell dello stato in ingresso.

    Senza Charlie lo stato di Bob e' diagonale nella base di Bell (Q = I), con Charlie
    la fedelta' e' (sum p)^2 = 1 (Q con tutti uni).
    """
    d = len(BELL_LABELS)
    return np.ones((d, d)) if cooperate else np.eye(d)


def haar_weight_moments(d: int) -> np.ndarray:
    """E[|c_i|^2 |c_j|^2] su stati di Haar in dimensione d: (1 + delta_ij) / (d (d + 1))."""
    return (np.ones((d, d)) + np.eye(d)) / (d * (d + 1))


def exact_average_fidelity(cooperate: bool = False) -> float:
    """Media di Haar in forma chiusa: sum_ij Q_ij E[p_i p_j]."""
    form = fidelity_form(cooperate)
    return float(np.sum(form * haar_weight_moments(form.shape[0])))
