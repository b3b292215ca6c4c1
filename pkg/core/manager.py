import logging
import os
import zlib
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from contextlib import contextmanager
from functools import partial
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

import config
from analysis import cqed_analytics, flyingcat, metrology, spectroscopy, stabnet, timebin
from analysis.visualizer import plot_result_table
from connectors.csv_connector import CsvConnector
from core.data_parser import ExperimentSpec, ResultTable, check_registry
from core.dynamics import IntegratorConfig, OpenSystem, TimeDependentOp, evolve
from core.exceptions import NumericalFailure, UsageError
from core.qcore import concurrence_wootters, destroy, embed, fidelity, ket, transition
from core.query import REGISTRY

logger = logging.getLogger(__name__)

# Modulo della libreria responsabile di ogni esperimento, per i messaggi d'errore
EXPERIMENT_MODULES = {
    "dispersive-phase": "cqed_analytics",
    "vacuum-rabi": "dynamics",
    "qwp-concurrence": "cqed_analytics",
    "filter-function": "spectroscopy",
    "purcell-envelope": "spectroscopy",
    "fisher-sweep": "metrology",
    "mle-study": "metrology",
    "parity-tradeoff": "flyingcat",
    "ghz-preparation": "flyingcat",
    "feasibility": "flyingcat",
    "tetra-witness": "stabnet",
    "tetra-teleport": "stabnet",
    "timebin-bandwidth": "timebin",
    "timebin-scaling": "timebin",
    "loss-backaction": "timebin",
}

PROBE_KINDS = {"ecs": metrology.ECS, "qwp": metrology.QWP}

Rows = List[List[float]]


def substream_seed(seed: int, name: str) -> int:
    """Seed a 64 bit del sotto-flusso `name`, derivato dal seed dello spec."""
    sequence = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode("utf-8")),))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def substream(seed: int, name: str) -> np.random.Generator:
    """Generatore Philox (counter-based) del sotto-flusso `name`."""
    sequence = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode("utf-8")),))
    return np.random.Generator(np.random.Philox(sequence))


def two_term_infidelity(tau: float, t1: float, kappa: float, a_coef: float, b_coef: float) -> float:
    """Modello eps(tau) = A/(kappa tau)^2 + B tau/T1 usato al posto della simulazione."""
    return a_coef / (kappa * tau) ** 2 + b_coef * tau / t1


class _WarningCollector(logging.Handler):
    """Raccoglie gli avvisi emessi durante un'esecuzione per i metadati."""

    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.messages: List[str] = []

    def emit(self, record: logging.LogRecord):
        self.messages.append(record.getMessage())


class ExperimentManager:
    """
    Orchestra le esecuzioni: risolve l'esperimento nel registro, distribuisce i
    punti della griglia al pool di worker, raccoglie i risultati in ordine e li
    passa al connettore CSV e al visualizer.
    """
    def __init__(self, workers: Optional[int] = None, executor: str = "process",
                 plot_dir: Optional[str] = None):
        """
        Args:
            workers: Numero di worker; 1 esegue tutto nel processo corrente.
            executor: "process" oppure "thread".
            plot_dir: Cartella degli SVG; di default <output>/plot.
        """
        if executor not in ("process", "thread"):
            raise UsageError(f"Executor sconosciuto '{executor}'.", "cli")
        self.workers = max(1, int(workers if workers is not None else config.MAX_WORKERS))
        self.executor = executor
        self.plot_dir = plot_dir
        check_registry()
        self._handlers: Dict[str, Callable[[ExperimentSpec, Callable], Tuple[Rows, Dict[str, Any]]]] = {
            "dispersive-phase": self._dispersive_phase,
            "vacuum-rabi": self._vacuum_rabi,
            "qwp-concurrence": self._qwp_concurrence,
            "filter-function": self._filter_function,
            "purcell-envelope": self._purcell_envelope,
            "fisher-sweep": self._fisher_sweep,
            "mle-study": self._mle_study,
            "parity-tradeoff": self._parity_tradeoff,
            "ghz-preparation": self._ghz_preparation,
            "feasibility": self._feasibility,
            "tetra-witness": self._tetra_witness,
            "tetra-teleport": self._tetra_teleport,
            "timebin-bandwidth": self._timebin_bandwidth,
            "timebin-scaling": self._timebin_scaling,
            "loss-backaction": self._loss_backaction,
        }

    @contextmanager
    def _pool(self) -> Iterator[Callable]:
        """Funzione di tipo `map` che restituisce i risultati nell'ordine di invio."""
        if self.workers == 1:
            yield map
            return
        pool_cls = ProcessPoolExecutor if self.executor == "process" else ThreadPoolExecutor
        with pool_cls(max_workers=self.workers) as pool:
            yield pool.map

    @staticmethod
    def _integrator(spec: ExperimentSpec) -> IntegratorConfig:
        return IntegratorConfig(rtol=spec.tolerances.get("rtol", config.ODE_RTOL),
                                atol=spec.tolerances.get("atol", config.ODE_ATOL))

    def run(self, spec: ExperimentSpec) -> ResultTable:
        """
        Esegue l'esperimento e scrive CSV, metadati e (opzionale) SVG.

        Returns:
            La ResultTable con i metadati (seed, versione, preset, avvisi, percorsi).

        Raises:
            UsageError: esperimento sconosciuto o parametri non validi.
            NumericalFailure: risultati non finiti o fallimento dell'integratore.
        """
        if spec.name not in REGISTRY:
            raise UsageError(f"Esperimento sconosciuto '{spec.name}'.", "cli")
        entry = REGISTRY[spec.name]
        module = EXPERIMENT_MODULES[spec.name]
        print(f"\n--- Avvio dell'esperimento {spec.name} (preset {spec.preset}, seed {spec.seed}) ---")

        collector = _WarningCollector()
        root = logging.getLogger()
        root.addHandler(collector)
        try:
            with self._pool() as map_fn:
                rows, summary = self._handlers[spec.name](spec, map_fn)
        finally:
            root.removeHandler(collector)

        rows = [[float(v) for v in row] for row in rows]
        if not all(np.isfinite(v) for row in rows for v in row):
            raise NumericalFailure(f"L'esperimento {spec.name} ha prodotto valori non finiti.", module)

        metadata = {
            "experiment": spec.name,
            "seed": spec.seed,
            "version": config.LIBRARY_VERSION,
            "preset": spec.preset,
            "params": spec.params,
            "tolerances": spec.tolerances,
            "tags": list(entry["tags"]),
            "rng": "numpy Philox, sotto-flussi SeedSequence(seed, spawn_key=crc32(nome))",
            "summary": summary,
            "warnings": collector.messages,
        }
        table = ResultTable(columns=list(entry["columns"]), rows=rows, metadata=metadata)

        connector = CsvConnector(spec.output_dir)
        metadata["csv"] = connector.write_table(spec.name, table)
        if spec.plot:
            if entry["plot"] is None:
                print(f"L'esperimento {spec.name} non prevede un grafico.")
            else:
                plot_dir = self.plot_dir or os.path.join(spec.output_dir, "plot")
                metadata["svg"] = plot_result_table(spec.name, table, entry["plot"], plot_dir,
                                                    title=entry["description"])
        connector.write_metadata(spec.name, metadata)
        print(f"--- Esperimento {spec.name} completato: {len(rows)} righe ---")
        return table

    # --- Sezione Circuit QED ---

    def _dispersive_phase(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        rows = []
        # kappa = 1: chi e kappa_int sono in unita' di kappa
        for ratio in p["chi_over_kappa"]:
            r_plus, phi_plus = cqed_analytics.dispersive_reflection(0.0, 0.0, ratio, 1.0, p["kappa_int"], 1)
            r_minus, phi_minus = cqed_analytics.dispersive_reflection(0.0, 0.0, ratio, 1.0, p["kappa_int"], -1)
            delta = abs(float(np.angle(r_plus * np.conj(r_minus))))
            rows.append([ratio, float(phi_plus), float(phi_minus), delta])
        return rows, {"max_delta_phi": max(r[3] for r in rows)}

    def _vacuum_rabi(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        g = p["g"]
        if g <= 0 or p["points"] < 2 or p["periods"] <= 0:
            raise UsageError("vacuum-rabi richiede g > 0, almeno 2 punti e periods > 0.", "dynamics")
        dims = (2, 2)
        sigma = embed(transition(2, 0, 1), 0, dims)
        a = embed(destroy(2), 1, dims)
        hamiltonian = g * (sigma.dag() @ a + sigma @ a.dag())
        collapse = []
        if p["kappa"] > 0:
            collapse.append(TimeDependentOp(a * float(np.sqrt(p["kappa"]))))
        if p["gamma"] > 0:
            collapse.append(TimeDependentOp(sigma * float(np.sqrt(p["gamma"]))))
        system = OpenSystem(TimeDependentOp(hamiltonian), tuple(collapse), dims)

        times = np.linspace(0.0, p["periods"] * np.pi / g, p["points"])
        rho0 = ket(dims, (1, 0)).dm()
        trajectory = evolve(system, rho0, times, self._integrator(spec))
        excited = np.real(trajectory.expect(sigma.dag() @ sigma))
        exact = np.cos(g * times) ** 2
        rows = [[t, pe, px] for t, pe, px in zip(times, excited, exact)]
        return rows, {"max_deviation": float(np.max(np.abs(excited - exact))),
                      "nfev": trajectory.metadata["nfev"]}

    def _qwp_concurrence(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        rows = []
        for n in p["n_photons"]:
            closed = cqed_analytics.qwp_concurrence(n, p["p"], p["eta"], p["chi_xi"])
            xstate = cqed_analytics.qwp_xstate(n, p["p"], p["eta"], p["chi_xi"], convention=p["convention"])
            rows.append([n, closed, concurrence_wootters(xstate)])
        gap = max(abs(r[1] - r[2]) for r in rows)
        return rows, {"max_gap": gap, "xstate_convention": p["convention"],
                      "xstate_mixing": cqed_analytics.XSTATE_MIXING[p["convention"]]}

    # --- Sezione Spettroscopia del rumore ---

    def _filter_function(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        if p["points"] < 2 or p["omega_max"] <= 0:
            raise UsageError("filter-function richiede almeno 2 punti e omega_max > 0.", "spectroscopy")
        seq = spectroscopy.cpmg(p["n_pulses"], p["tau"])
        omega = np.linspace(0.0, p["omega_max"], p["points"])
        classical = spectroscopy.filter_function(spectroscopy.KIND_CLASSICAL, seq, omega, seq.duration)
        quantum = spectroscopy.filter_function(spectroscopy.KIND_QUANTUM, seq, omega, seq.duration)
        rows = [list(r) for r in zip(omega, classical, quantum)]
        return rows, {"duration": seq.duration, "f_classical_zero": float(classical[0])}

    def _purcell_envelope(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        if p["echoes"] < 1 or p["points"] < 1:
            raise UsageError("purcell-envelope richiede echoes >= 1 e points >= 1.", "spectroscopy")
        # kappa = 1: tempi in unita' di 1/kappa
        params = spectroscopy.PurcellParams(g=p["g_over_kappa"], kappa=1.0,
                                            t2_star=p["kappa_t2_star"], tau=p["kappa_tau"])
        echoes = np.unique(np.round(np.geomspace(1, p["echoes"], p["points"])).astype(int))
        rows = []
        for n in echoes:
            result = spectroscopy.purcell_envelope(int(n), params)
            rows.append([int(n), result["exact"], result["asymptote"], result["gamma_p_n_tau"]])
        return rows, {"purcell_time_over_tau": 1.0 / (params.gamma_p * params.tau)}

    # --- Sezione Metrologia ---

    @staticmethod
    def _probe(state: str) -> str:
        if state.lower() not in PROBE_KINDS:
            raise UsageError(f"Stato sonda '{state}' non supportato (attesi: ecs, qwp).", "metrology")
        return PROBE_KINDS[state.lower()]

    def _fisher_sweep(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        kind = self._probe(p["state"])
        if p["points"] < 1:
            raise UsageError("fisher-sweep richiede almeno un punto.", "metrology")
        ch = metrology.ChannelParams(p=p["p"])
        alpha = metrology.inverse_amplitude(kind, p["nbar"])
        # estremi esclusi: il conteggio perde informazione in phi = 0 e phi = pi
        phis = np.linspace(0.0, np.pi, p["points"] + 2)[1:-1]
        classical = list(map_fn(partial(metrology.classical_fisher_info, p["scheme"], kind, alpha=alpha, ch=ch),
                                phis))
        quantum = metrology.quantum_fisher_info(kind, p["nbar"], ch)
        rows = [[phi, i_c, quantum] for phi, i_c in zip(phis, classical)]
        spread = (max(classical) - min(classical)) / max(abs(np.mean(classical)), 1e-300)
        return rows, {"alpha": alpha, "relative_spread": float(spread)}

    def _mle_study(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        kind = self._probe(p["state"])
        alpha = metrology.inverse_amplitude(kind, p["nbar"])
        study = metrology.mle_study(p["scheme"], kind, alpha, p["phi"], p["shots"], p["repetitions"],
                                    seed=substream_seed(spec.seed, "mle-study"))
        rows = [[p["shots"], p["repetitions"], study["mean"], study["variance"],
                 study["crb_classical"], study["crb_quantum"]]]
        return rows, {"variance_over_crb_quantum": study["variance"] / study["crb_quantum"]}

    # --- Sezione Parity check e stati GHZ ---

    def _parity_tradeoff(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        rows = []
        for alpha in p["alphas"]:
            result = flyingcat.total_error(alpha, p["eta1"], p["eta2"])
            approx = flyingcat.p_tot_approx(alpha, (p["eta1"], p["eta2"]))
            rows.append([alpha, result["p_tot"], approx, result["alpha_opt"]])
        return rows, {"alpha_opt": rows[0][3] if rows else float("nan")}

    def _ghz_preparation(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        target = flyingcat.ghz_state()
        rows = []
        for alpha in p["alphas"]:
            sigma, error = flyingcat.ghz_prepare(alpha, p["eta12"], p["eta23"])
            rows.append([alpha, fidelity(target, sigma), error])
        best = max(rows, key=lambda r: r[1])
        return rows, {"best_alpha": best[0], "best_fidelity": best[1]}

    def _feasibility(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        fp = flyingcat.FeasibilityParams(chi=p["chi"], kappa_int=p["kappa_int"], tau=p["tau"],
                                         t2_star=p["t2_star"])
        budget = flyingcat.feasibility(fp, cqed_analytics.gaussian_spectral_density(p["tau"]), p["alpha"])
        rows = [[budget["epsilon_reflect"], budget["epsilon_reflect_approx"], budget["bandwidth_term"],
                 budget["internal_loss_term"], budget["epsilon_qubit"]]]
        return rows, {"kappa0": fp.kappa0, "internal_loss_formula": flyingcat.INTERNAL_LOSS_FORMULA,
                      "internal_loss_reference": flyingcat.INTERNAL_LOSS_REFERENCE}

    # --- Sezione Stato tetraedro ---

    def _tetra_witness(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        noises = [stabnet.MeasurementNoise(q, p["p1"], p["p2"]) for q in p["q_values"]]
        results = list(map_fn(partial(stabnet.witness, None), noises))
        rows = [[noise.q, r["fidelity"], r["projector"], r["two_setting"], r["estimate"]]
                for noise, r in zip(noises, results)]
        return rows, {"entangled_points": sum(1 for r in rows if r[2] < 0)}

    def _tetra_teleport(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        mean, stderr = stabnet.average_fidelity(p["samples"], p["cooperate"],
                                                seed=substream_seed(spec.seed, "tetra-teleport"))
        exact = stabnet.exact_average_fidelity(p["cooperate"])
        rows = [[p["samples"], 1.0 if p["cooperate"] else 0.0, mean, stderr, exact]]
        return rows, {"deviation_in_stderr": abs(mean - exact) / stderr if stderr > 0 else 0.0}

    # --- Sezione Porta CZ time-bin ---

    def _timebin_bandwidth(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        kappa = p["kappa"]
        integrator = self._integrator(spec)
        rows = []
        for kappa_tau in sorted(p["kappa_tau"]):
            cfg = timebin.GateConfig(kappa=kappa, tau=kappa_tau / kappa, n_max=p["n_max"])
            result = timebin.gate_fidelity(cfg, p_m=p["p_m"], integrator=integrator, map_fn=map_fn)
            rows.append([kappa_tau, result["epsilon"], result["success_probability"]])
        summary: Dict[str, Any] = {}
        positive = [r for r in rows if r[1] > 0]
        if len(positive) >= 2:
            fit = timebin.fit_power_law([r[0] for r in positive], [r[1] for r in positive])
            summary = {"slope": fit["exponent"], "slope_stderr": fit["exponent_stderr"],
                       "prefactor_A": fit["prefactor"]}
        return rows, summary

    def _timebin_scaling(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        if not 0 < p["tau_min"] < p["tau_max"]:
            raise UsageError("Serve 0 < tau_min < tau_max.", "timebin")
        tau_grid = np.geomspace(p["tau_min"], p["tau_max"], p["tau_points"])
        cfg = timebin.GateConfig(kappa=p["kappa"])
        if p["model"] == "two-term":
            model = partial(two_term_infidelity, kappa=p["kappa"], a_coef=p["a_coef"], b_coef=p["b_coef"])
            sweep = timebin.scaling_sweep(p["t1_list"], tau_grid, cfg, infidelity=model, refine=timebin.GOLDEN)
        elif p["model"] == "simulation":
            sweep = timebin.scaling_sweep(p["t1_list"], tau_grid, cfg, refine=timebin.PARABOLIC, map_fn=map_fn)
        else:
            raise UsageError(f"Modello sconosciuto '{p['model']}' (attesi: two-term, simulation).", "timebin")
        fits = sweep["fits"]
        rows = [[r["t1_s"], r["tau_opt_s"], r["eps_min"], fits["xi"], fits["zeta"]] for r in sweep["rows"]]
        return rows, fits

    def _loss_backaction(self, spec: ExperimentSpec, map_fn: Callable) -> Tuple[Rows, Dict[str, Any]]:
        p = spec.params
        tau = p["tau"]
        if p["bath"] == "flat":
            bath = timebin.BathSpec.flat(p["j0"])
        elif p["bath"] == "gaussian":
            bath = timebin.BathSpec.gaussian(p["g"], p["width"], p["detuning"])
        elif p["bath"] == "discrete":
            continuous = timebin.BathSpec.gaussian(p["g"], p["width"], p["detuning"])
            bath = timebin.sample_tls_bath(continuous, p["n_tls"], substream(spec.seed, "loss-backaction"))
        else:
            raise UsageError(f"Bagno sconosciuto '{p['bath']}' (attesi: flat, gaussian, discrete).", "timebin")
        rows = []
        for ratio in p["sep_over_tau"]:
            result = timebin.loss_backaction(bath, None, ratio * tau, tau=tau)
            rows.append([ratio, result.q, abs(result.coherence), result.phase, result.eta])
        return rows, {"q": rows[0][1] if rows else 0.0}
