# analysis/metrology.py
"""
Stima di fase interferometrica con stati ECS, QWP e N00N: informazione di Fisher
quantistica e classica, modelli degli esiti per homodyne e conteggio di fotoni,
stimatore di massima verosimiglianza e limiti di precisione.
"""
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize_scalar
from scipy.special import gammaln, lambertw

from core.exceptions import NumericalFailure, UsageError

logger = logging.getLogger(__name__)

MODULE = "metrology"

ECS = "ECS"
QWP = "QWP"
NOON = "NOON"
KINDS = (ECS, QWP, NOON)

HOMODYNE = "homodyne"
COUNTING = "counting"
SCHEMES = (HOMODYNE, COUNTING)

# Dominio di quadratura homodyne: |x - mu| <= HOMODYNE_RANGE
HOMODYNE_RANGE = 10.0
GRID_POINTS = 241


@dataclass(frozen=True)
class ChannelParams:
    """Perdita per fotone p, esponente di defasamento chi e fase del qubit theta (solo QWP)."""
    p: float = 0.0
    chi: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise UsageError(f"La perdita p = {self.p} deve stare in [0, 1].", MODULE)
        if self.chi < 0:
            raise UsageError("L'esponente di defasamento deve essere non negativo.", MODULE)


@dataclass(frozen=True)
class PhaseSetting:
    """Fasi dei due bracci; le fasi degli oscillatori locali sono derivate."""
    phi: float
    phi_bar: float = 0.0

    @property
    def lo_plus(self) -> float:
        return np.pi / 2 + self.phi_bar

    @property
    def lo_minus(self) -> float:
        return self.phi_bar


@dataclass(frozen=True)
class ProbeState:
    kind: str
    alpha: complex = 0.0
    N: int = 0

    def __post_init__(self):
        _check_kind(self.kind)

    @property
    def n_bar(self) -> float:
        if self.kind == NOON:
            return float(self.N)
        return mean_photon(self.kind, self.alpha)

    @classmethod
    def from_mean_photon(cls, kind: str, n_bar: float) -> 'ProbeState':
        if kind == NOON:
            return cls(kind, 0.0, int(round(n_bar)))
        return cls(kind, inverse_amplitude(kind, n_bar))


def _check_kind(kind: str):
    if kind not in KINDS:
        raise UsageError(f"Stato sonda sconosciuto: '{kind}'", MODULE)


def lambert_w(z: float) -> float:
    """Ramo principale della funzione W di Lambert."""
    return float(np.real(lambertw(z, 0)))


def mean_photon(kind: str, alpha: Union[complex, int]) -> float:
    """Numero medio di fotoni n_bar della sonda (per N00N alpha e' il numero N)."""
    _check_kind(kind)
    if kind == NOON:
        return float(alpha)
    x = abs(alpha) ** 2
    if kind == QWP:
        return float(x)
    return float(x / (1 + np.exp(-x)))


def inverse_amplitude(kind: str, n_bar: float) -> float:
    """Ampiezza reale alpha >= 0 con numero medio di fotoni n_bar."""
    _check_kind(kind)
    if n_bar < 0:
        raise UsageError("Il numero medio di fotoni deve essere non negativo.", MODULE)
    if kind == NOON:
        raise UsageError("Lo stato N00N non ha ampiezza coerente.", MODULE)
    if kind == QWP or n_bar == 0:
        return float(np.sqrt(n_bar))
    # x/(1 + e^{-x}) = n_bar  =>  x = n_bar + W(n_bar e^{-n_bar})
    x = n_bar + lambert_w(n_bar * np.exp(-n_bar))
    return float(np.sqrt(x))


def quantum_fisher_info(kind: str, n_bar: float, ch: Optional[ChannelParams] = None) -> float:
    """
    Informazione di Fisher quantistica rispetto alla fase differenziale.

    Args:
        kind: "ECS", "QWP" o "NOON" (per N00N n_bar = N).
        n_bar: Numero medio di fotoni dello stato iniziale.
        ch: Perdita e defasamento del canale.
    """
    _check_kind(kind)
    ch = ch or ChannelParams()
    if n_bar < 0:
        raise UsageError("Il numero medio di fotoni deve essere non negativo.", MODULE)
    keep = 1 - ch.p
    if kind == QWP:
        return float(np.exp(-2 * ch.p * n_bar - 2 * ch.chi) * keep ** 2 * n_bar ** 2 + keep * n_bar)
    if kind == ECS:
        w = lambert_w(n_bar * np.exp(-n_bar))
        return float(keep ** 2 * n_bar ** 2 * np.exp(-2 * ch.p * (n_bar + w)) + keep * n_bar * (1 + keep * w))
    # N00N: sopravvive solo la componente senza perdite, peso (1-p)^N
    return float(n_bar ** 2 * keep ** n_bar)


def precision_bound(information: float, M: int, p: float, n_bar: float) -> Tuple[float, float]:
    """
    Returns:
        (delta_phi = 1/sqrt(M I), delta_phi_SQL = [(1-p) M n_bar]^{-1/2})
    """
    if M < 1:
        raise UsageError("Servono M >= 1 ripetizioni.", MODULE)
    if information < 0:
        raise UsageError("L'informazione di Fisher non puo' essere negativa.", MODULE)
    delta = np.inf if information == 0 else 1.0 / np.sqrt(M * information)
    sql_info = (1 - p) * M * n_bar
    delta_sql = np.inf if sql_info == 0 else 1.0 / np.sqrt(sql_info)
    return float(delta), float(delta_sql)


def counting_conditional_information(m: Union[int, np.ndarray], n: Union[int, np.ndarray], phi: float,
                                     p: float, alpha: float) -> np.ndarray:
    """Informazione I_mn della misura X del qubit condizionata al conteggio (m, n)."""
    total = np.asarray(m) + np.asarray(n)
    if p == 0:
        return (total ** 2).astype(float)
    c2 = np.cos(total * phi) ** 2
    return total ** 2 * np.sin(total * phi) ** 2 / (np.exp(2 * p * alpha ** 2) - c2)


class OutcomeModel:
    """
    Distribuzione degli esiti di una misura (homodyne o conteggio) per ECS o QWP.

    Formato degli esiti per riga:
      - ECS homodyne: (x_plus, x_minus); ECS conteggio: (m, n)
      - QWP homodyne: (x_plus, x_minus, X); QWP conteggio: (m, n, X), con X = +1/-1
    """

    def __init__(self, scheme: str, kind: str, alpha: float, ch: Optional[ChannelParams] = None):
        if scheme not in SCHEMES:
            raise UsageError(f"Schema di misura sconosciuto: '{scheme}'", MODULE)
        if kind not in (ECS, QWP):
            raise UsageError("I modelli degli esiti esistono solo per ECS e QWP.", MODULE)
        if np.iscomplexobj(alpha) and abs(np.imag(alpha)) > 0:
            logger.debug("Uso |alpha|: la fase di alpha non cambia la statistica.")
        self.scheme = scheme
        self.kind = kind
        self.alpha = float(abs(alpha))
        self.ch = ch or ChannelParams()
        self.visibility = np.exp(-self.ch.p * self.alpha ** 2)
        if kind == QWP:
            self.visibility *= np.exp(-self.ch.chi)
        # 2 N_alpha^2 per l'ECS
        self.norm = 1.0 / (1 + np.exp(-self.alpha ** 2))

    @property
    def n_bar(self) -> float:
        return mean_photon(self.kind, self.alpha)

    @property
    def width(self) -> int:
        return 3 if self.kind == QWP else 2

    def _check(self, outcomes) -> np.ndarray:
        outcomes = np.atleast_2d(np.asarray(outcomes, dtype=float))
        if outcomes.shape[1] != self.width:
            raise UsageError(f"Gli esiti devono avere {self.width} colonne per {self.kind}/{self.scheme}.", MODULE)
        return outcomes

    # --- Termini homodyne ---

    def means(self, phi: float) -> Tuple[float, float, float, float]:
        """(mu_plus, mu_minus, d mu_plus/d phi, d mu_minus/d phi)."""
        amplitude = np.sqrt(1 - self.ch.p) * self.alpha
        mu_p, mu_m = amplitude * np.sin(phi / 2), amplitude * np.cos(phi / 2)
        return mu_p, mu_m, mu_m / 2, -mu_p / 2

    def _homodyne(self, outcomes: np.ndarray, phi: float) -> Tuple[np.ndarray, np.ndarray]:
        x_p, x_m = outcomes[:, 0], outcomes[:, 1]
        mu_p, mu_m, dmu_p, dmu_m = self.means(phi)
        gauss = np.exp(-(x_p - mu_p) ** 2 - (x_m - mu_m) ** 2) / np.pi
        dlog_gauss = 2 * (x_p - mu_p) * dmu_p + 2 * (x_m - mu_m) * dmu_m
        fringe = 2 * x_p * mu_m - 2 * x_m * mu_p
        dfringe = 2 * x_p * dmu_m - 2 * x_m * dmu_p
        if self.kind == ECS:
            bracket = 1 + self.visibility * np.cos(fringe)
            dbracket = -self.visibility * np.sin(fringe) * dfringe
            prob = self.norm * bracket * gauss
            return prob, self.norm * gauss * (dbracket + bracket * dlog_gauss)
        X = outcomes[:, 2]
        argument = fringe + self.ch.theta
        bracket = 0.5 * (1 + X * self.visibility * np.cos(argument))
        dbracket = -0.5 * X * self.visibility * np.sin(argument) * dfringe
        prob = bracket * gauss
        return prob, gauss * (dbracket + bracket * dlog_gauss)

    # --- Termini di conteggio ---

    def poisson_rate(self) -> float:
        return (1 - self.ch.p) * self.alpha ** 2 / 2

    def _counting(self, outcomes: np.ndarray, phi: float) -> Tuple[np.ndarray, np.ndarray]:
        m, n = outcomes[:, 0], outcomes[:, 1]
        lam = self.poisson_rate()
        if lam > 0:
            log_poisson = -2 * lam + (m + n) * np.log(lam) - gammaln(m + 1) - gammaln(n + 1)
            poisson = np.exp(log_poisson)
        else:
            poisson = ((m == 0) & (n == 0)).astype(float)
        total = m + n
        if self.kind == ECS:
            argument = total * phi + m * np.pi
            bracket = 1 + self.visibility * np.cos(argument)
            dbracket = -self.visibility * np.sin(argument) * total
            return self.norm * bracket * poisson, self.norm * dbracket * poisson
        X = outcomes[:, 2]
        argument = total * phi - m * np.pi - self.ch.theta
        bracket = 0.5 * (1 + X * self.visibility * np.cos(argument))
        dbracket = -0.5 * X * self.visibility * np.sin(argument) * total
        return bracket * poisson, dbracket * poisson

    def probability_and_derivative(self, outcomes, phi: float) -> Tuple[np.ndarray, np.ndarray]:
        """Densita' (o pmf) p(x|phi) e la derivata analitica d p/d phi."""
        outcomes = self._check(outcomes)
        if self.scheme == HOMODYNE:
            return self._homodyne(outcomes, phi)
        return self._counting(outcomes, phi)

    def probability(self, outcomes, phi: float) -> np.ndarray:
        return self.probability_and_derivative(outcomes, phi)[0]

    def score(self, outcomes, phi: float) -> np.ndarray:
        """d ln p / d phi, nullo dove p si annulla."""
        prob, dprob = self.probability_and_derivative(outcomes, phi)
        safe = np.where(prob > 0, prob, 1.0)
        return np.where(prob > 0, dprob / safe, 0.0)

    def log_likelihood(self, outcomes, phi: float) -> float:
        prob = self.probability(outcomes, phi)
        with np.errstate(divide='ignore'):
            return float(np.sum(np.log(prob)))

    # --- Campionamento ---

    def sample(self, phi: float, size: int, rng: np.random.Generator) -> np.ndarray:
        """Estrae size esiti indipendenti dalla distribuzione al valore phi."""
        if size < 0:
            raise UsageError("Il numero di campioni deve essere non negativo.", MODULE)
        if self.scheme == HOMODYNE:
            mu_p, mu_m, _, _ = self.means(phi)
            draw = lambda k: np.column_stack([rng.normal(mu_p, np.sqrt(0.5), k),
                                              rng.normal(mu_m, np.sqrt(0.5), k)])
        else:
            lam = self.poisson_rate()
            draw = lambda k: np.column_stack([rng.poisson(lam, k), rng.poisson(lam, k)]).astype(float)

        if self.kind == QWP:
            base = draw(size)
            with_plus = np.column_stack([base, np.ones(size)])
            # p(X = +1 | base) = bracket(+1)
            prob_plus, _ = self.probability_and_derivative(with_plus, phi)
            prob_base = prob_plus + self.probability(np.column_stack([base, -np.ones(size)]), phi)
            conditional = np.divide(prob_plus, prob_base, out=np.full(size, 0.5), where=prob_base > 0)
            X = np.where(rng.random(size) < conditional, 1.0, -1.0)
            return np.column_stack([base, X])

        # ECS: rifiuto con accettazione (1 + V cos)/2 rispetto alla proposta senza frange
        accepted = []
        remaining = size
        while remaining > 0:
            batch = draw(max(2 * remaining, 16))
            prob = self.probability(batch, phi)
            if self.scheme == HOMODYNE:
                mu_p, mu_m, _, _ = self.means(phi)
                proposal = np.exp(-(batch[:, 0] - mu_p) ** 2 - (batch[:, 1] - mu_m) ** 2) / np.pi
            else:
                lam = self.poisson_rate()
                proposal = np.exp(-2 * lam + (batch[:, 0] + batch[:, 1]) * np.log(max(lam, 1e-300))
                                  - gammaln(batch[:, 0] + 1) - gammaln(batch[:, 1] + 1))
            ratio = prob / (2 * self.norm * proposal)
            keep = rng.random(len(batch)) < ratio
            accepted.append(batch[keep][:remaining])
            remaining -= len(accepted[-1])
        return np.concatenate(accepted)[:size]

    # --- Griglie per le somme/integrali ---

    def counting_truncation(self) -> int:
        """Troncamento m + n <= n_bar + 12 sqrt(n_bar) + 20."""
        n_bar = self.n_bar
        return int(np.ceil(n_bar + 12 * np.sqrt(n_bar) + 20))

    def outcome_grid(self, phi: float) -> Tuple[np.ndarray, np.ndarray]:
        """Esiti e pesi di quadratura/somma che coprono lo spazio degli esiti."""
        if self.scheme == COUNTING:
            cutoff = self.counting_truncation()
            m, n = np.meshgrid(np.arange(cutoff + 1), np.arange(cutoff + 1), indexing='ij')
            mask = (m + n) <= cutoff
            points = np.column_stack([m[mask], n[mask]]).astype(float)
            weights = np.ones(len(points))
        else:
            mu_p, mu_m, _, _ = self.means(phi)
            amplitude = max(abs(mu_p), abs(mu_m), 1.0)
            # Le frange hanno periodo ~ pi/mu: almeno 16 nodi per periodo
            order = 64 + 16 * int(np.ceil(2 * HOMODYNE_RANGE * amplitude / np.pi))
            nodes, w = leggauss(order)
            xs_p = mu_p + HOMODYNE_RANGE * nodes
            xs_m = mu_m + HOMODYNE_RANGE * nodes
            gp, gm = np.meshgrid(xs_p, xs_m, indexing='ij')
            wp, wm = np.meshgrid(w, w, indexing='ij')
            points = np.column_stack([gp.ravel(), gm.ravel()])
            weights = (wp * wm).ravel() * HOMODYNE_RANGE ** 2
        if self.kind == QWP:
            size = len(points)
            points = np.vstack([np.column_stack([points, np.ones(size)]),
                                np.column_stack([points, -np.ones(size)])])
            weights = np.concatenate([weights, weights])
        return points, weights


def outcome_distribution(scheme: str, kind: str, phi: Union[float, PhaseSetting], alpha: float,
                         ch: Optional[ChannelParams] = None) -> Tuple[Callable, Callable]:
    """
    Returns:
        (valutatore p(esito|phi), campionatore sampler(size, rng))
    """
    if isinstance(phi, PhaseSetting):
        phi = phi.phi
    model = OutcomeModel(scheme, kind, alpha, ch)
    return (lambda outcomes: model.probability(outcomes, phi)), (lambda size, rng: model.sample(phi, size, rng))


def classical_fisher_info(scheme: str, kind: str, phi: float, alpha: float,
                          ch: Optional[ChannelParams] = None, details: bool = False) -> Union[float, Dict[str, float]]:
    """
    Informazione di Fisher classica I_C = sum/int (d_phi p)^2 / p.

    Con details=True restituisco anche la massa totale coperta e la coda troncata.
    """
    model = OutcomeModel(scheme, kind, alpha, ch)
    points, weights = model.outcome_grid(phi)
    prob, dprob = model.probability_and_derivative(points, phi)
    positive = prob > 0
    integrand = np.zeros_like(prob)
    integrand[positive] = dprob[positive] ** 2 / prob[positive]
    information = float(np.sum(weights * integrand))
    mass = float(np.sum(weights * prob))
    if not np.isfinite(information):
        raise NumericalFailure("Informazione di Fisher non finita.", MODULE)
    tail = max(0.0, 1.0 - mass)
    if tail > 1e-8:
        logger.warning("La griglia degli esiti copre solo %.10f della probabilita'.", mass)
    if details:
        return {"information": information, "mass": mass, "tail": tail}
    return information


def _local_maxima(values: np.ndarray) -> np.ndarray:
    inner = (values[1:-1] >= values[:-2]) & (values[1:-1] >= values[2:])
    return np.where(inner)[0] + 1


def mle_phase(samples, scheme: str, kind: str, alpha: float, ch: Optional[ChannelParams] = None,
              window: Tuple[float, float] = (-np.pi, np.pi), grid_points: int = GRID_POINTS) -> Dict[str, Any]:
    """
    Stimatore di massima verosimiglianza della fase.

    Cerco il massimo della log-verosimiglianza su una griglia e lo rifinisco
    con una ricerca a sezione aurea. L'intervallo di confidenza al 95% viene
    dall'informazione osservata.

    Returns:
        Dizionario con phi_hat, ci, observed_information e metadata.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise UsageError("Servono almeno un campione per la stima.", MODULE)
    lo, hi = window
    if not (-np.pi - 1e-12 <= lo < hi <= np.pi + 1e-12):
        raise UsageError("La finestra di ricerca deve stare in (-pi, pi].", MODULE)
    model = OutcomeModel(scheme, kind, alpha, ch)
    grid = np.linspace(lo, hi, grid_points)
    loglik = np.array([model.log_likelihood(samples, phi) for phi in grid])
    if not np.any(np.isfinite(loglik)):
        raise NumericalFailure("La verosimiglianza e' nulla su tutta la finestra.", MODULE)
    best = int(np.nanargmax(np.where(np.isfinite(loglik), loglik, -np.inf)))
    phi_hat = float(grid[best])
    warnings = []

    if 0 < best < grid_points - 1 and np.all(np.isfinite(loglik[best - 1:best + 2])):
        try:
            result = minimize_scalar(lambda phi: -model.log_likelihood(samples, phi),
                                     bracket=(grid[best - 1], grid[best], grid[best + 1]),
                                     method='golden', tol=1e-10)
            if result.success and result.fun <= -loglik[best]:
                phi_hat = float(result.x)
        except ValueError as e:
            logger.debug("Rifinitura aurea non riuscita: %s", e)

    peaks = [k for k in _local_maxima(loglik) if loglik[best] - loglik[k] < 2.0]
    distinct = [k for k in peaks if abs(k - best) > 2]
    multimodal = len(distinct) > 0
    if multimodal:
        warnings.append("verosimiglianza multimodale")
        logger.warning("Verosimiglianza multimodale: %d massimi locali competitivi.", len(distinct) + 1)

    h = 1e-4
    curvature = (model.log_likelihood(samples, phi_hat + h) - 2 * model.log_likelihood(samples, phi_hat)
                 + model.log_likelihood(samples, phi_hat - h)) / h ** 2
    observed = -curvature
    if not np.isfinite(observed) or observed <= 0:
        observed = float(np.sum(model.score(samples, phi_hat) ** 2))
    half_width = 1.96 / np.sqrt(observed) if observed > 0 else np.inf
    return {
        "phi_hat": phi_hat,
        "ci": (phi_hat - half_width, phi_hat + half_width),
        "observed_information": float(observed),
        "metadata": {"multimodal": multimodal, "warnings": warnings, "samples": len(samples)},
    }


def mle_study(scheme: str, kind: str, alpha: float, phi: float, M: int, repetitions: int,
              ch: Optional[ChannelParams] = None, seed: int = 0,
              window: Tuple[float, float] = (-np.pi, np.pi), grid_points: int = GRID_POINTS) -> Dict[str, Any]:
    """
    Ripete la stima MLE su campioni indipendenti e confronta la varianza
    empirica con 1/(M I_C) e 1/(M I_Q).
    """
    if M < 1 or repetitions < 2:
        raise UsageError("Servono M >= 1 e almeno 2 ripetizioni.", MODULE)
    model = OutcomeModel(scheme, kind, alpha, ch)
    streams = np.random.SeedSequence(seed).spawn(repetitions)
    estimates = np.empty(repetitions)
    for k, stream in enumerate(streams):
        rng = np.random.Generator(np.random.Philox(stream))
        samples = model.sample(phi, M, rng)
        estimates[k] = mle_phase(samples, scheme, kind, alpha, ch, window, grid_points)["phi_hat"]
        logger.debug("Ripetizione %d: phi_hat = %.6f", k, estimates[k])
    info_c = classical_fisher_info(scheme, kind, phi, alpha, ch)
    info_q = quantum_fisher_info(kind, model.n_bar, model.ch)
    return {
        "estimates": estimates,
        "mean": float(np.mean(estimates)),
        "variance": float(np.var(estimates, ddof=1)),
        "crb_classical": float(1 / (M * info_c)) if info_c > 0 else np.inf,
        "crb_quantum": float(1 / (M * info_q)) if info_q > 0 else np.inf,
        "information_classical": info_c,
        "information_quantum": info_q,
    }
