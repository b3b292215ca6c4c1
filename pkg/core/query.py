# core/query.py
"""
Registro degli esperimenti eseguibili dalla CLI. Ogni voce riporta una descrizione,
lo schema dei parametri (tipo, valore per i preset "fast" e "full") e le
colonne del CSV prodotto.
"""

# Tipi ammessi per i parametri
FLOAT = "float"
INT = "int"
BOOL = "bool"
STR = "str"
FLOAT_LIST = "float-list"

PARAM_TYPES = (FLOAT, INT, BOOL, STR, FLOAT_LIST)


def param(kind: str, fast, full=None, help: str = "") -> dict:
    """Voce dello schema; se `full` manca il preset completo usa il valore di `fast`."""
    return {"type": kind, "fast": fast, "full": fast if full is None else full, "help": help}


# --- Sezione Circuit QED ---

DISPERSIVE_PHASE = {
    "description": "Fase di riflessione dispersiva phi_+/- e contrasto di fase al variare di chi/kappa.",
    "tags": ["fase di riflessione dispersiva", "contrasto di fase pi per chi = kappa/2"],
    "params": {
        "chi_over_kappa": param(FLOAT_LIST, [0.1, 0.25, 0.5, 1.0, 2.0], help="Valori di chi/kappa"),
        "kappa_int": param(FLOAT, 0.0, help="Perdita interna in unita' di kappa"),
    },
    "columns": ["chi_over_kappa", "phi_plus", "phi_minus", "delta_phi"],
    "plot": {"x": "chi_over_kappa", "y": ["delta_phi"], "logx": True},
}

VACUUM_RABI = {
    "description": "Oscillazione di Rabi nel vuoto integrata con l'equazione maestra contro cos^2(g t).",
    "tags": ["oscillazione di Rabi nel vuoto", "equazione maestra"],
    "params": {
        "g": param(FLOAT, 1.0, help="Accoppiamento g (rad/s)"),
        "kappa": param(FLOAT, 0.0, help="Decadimento della cavita'"),
        "gamma": param(FLOAT, 0.0, help="Decadimento del qubit"),
        "points": param(INT, 200, help="Punti temporali"),
        "periods": param(FLOAT, 2.0, help="Durata in periodi di Rabi"),
    },
    "columns": ["t", "p_excited", "p_excited_exact"],
    "plot": {"x": "t", "y": ["p_excited", "p_excited_exact"]},
}

QWP_CONCURRENCE = {
    "description": "Concorrenza dello stato qubit-which-path: forma chiusa contro Wootters sullo stato X.",
    "tags": ["concorrenza qubit-which-path", "stato X post-misura"],
    "params": {
        "n_photons": param(FLOAT_LIST, [1.0, 3.0, 5.0, 10.0], help="Numero medio di fotoni N"),
        "p": param(FLOAT, 0.01, help="Perdita per fotone"),
        "eta": param(FLOAT, 1.0, help="Efficienza del rivelatore"),
        "chi_xi": param(FLOAT, 0.0, help="Esponente di defasamento"),
        "convention": param(STR, "closed-form", help="Peso di rho_- nello stato X: closed-form oppure mixture"),
    },
    "columns": ["n_photons", "concurrence", "concurrence_wootters"],
    "plot": {"x": "n_photons", "y": ["concurrence", "concurrence_wootters"]},
}

# --- Sezione Spettroscopia del rumore ---

FILTER_FUNCTION = {
    "description": "Filter function classica e quantistica di una sequenza CPMG.",
    "tags": ["filter function classica", "filter function quantistica", "CPMG"],
    "params": {
        "n_pulses": param(INT, 4, help="Numero di impulsi pi"),
        "tau": param(FLOAT, 1.0, help="Spaziatura degli impulsi (s)"),
        "omega_max": param(FLOAT, 20.0, help="Frequenza massima (rad/s)"),
        "points": param(INT, 400, 4000, help="Punti in frequenza"),
    },
    "columns": ["omega", "f_classical", "f_quantum"],
    "plot": {"x": "omega", "y": ["f_classical"]},
}

PURCELL_ENVELOPE = {
    "description": "Inviluppi di eco con decadimento di Purcell: media esatta contro asintoto.",
    "tags": ["inviluppo di Purcell", "asintoto a esponenziale stirato"],
    "params": {
        "g_over_kappa": param(FLOAT, 0.1, help="g/kappa"),
        "kappa_t2_star": param(FLOAT, 0.1, help="kappa T2*"),
        "kappa_tau": param(FLOAT, 10.0, help="kappa tau"),
        "echoes": param(INT, 2000, 20000, help="Indice dell'ultima eco"),
        "points": param(INT, 40, help="Echi campionati in scala logaritmica"),
    },
    "columns": ["n", "envelope", "asymptote", "gamma_p_n_tau"],
    "plot": {"x": "n", "y": ["envelope", "asymptote"], "logy": True},
}

# --- Sezione Metrologia ---

FISHER_SWEEP = {
    "description": "Informazione di Fisher classica lungo una griglia di fasi contro quella quantistica.",
    "tags": ["informazione di Fisher classica", "informazione di Fisher quantistica", "homodyne", "conteggio"],
    "params": {
        "state": param(STR, "ecs", help="Stato sonda: ecs oppure qwp"),
        "scheme": param(STR, "homodyne", help="Schema: homodyne oppure counting"),
        "p": param(FLOAT, 0.05, help="Perdita per fotone"),
        "nbar": param(FLOAT, 10.0, help="Numero medio di fotoni"),
        "points": param(INT, 50, 200, help="Punti della griglia di fase"),
    },
    "columns": ["phi", "i_classical", "i_quantum"],
    "plot": {"x": "phi", "y": ["i_classical", "i_quantum"]},
}

MLE_STUDY = {
    "description": "Consistenza dello stimatore di massima verosimiglianza: varianza empirica contro 1/(M I_Q).",
    "tags": ["massima verosimiglianza", "limite di Cramer-Rao"],
    "params": {
        "state": param(STR, "ecs", help="Stato sonda"),
        "scheme": param(STR, "homodyne", help="Schema di misura"),
        "nbar": param(FLOAT, 4.0, help="Numero medio di fotoni"),
        "phi": param(FLOAT, 0.7, help="Fase vera"),
        "shots": param(INT, 1000, 10000, help="Misure per stima M"),
        "repetitions": param(INT, 20, 200, help="Ripetizioni"),
    },
    "columns": ["shots", "repetitions", "mean", "variance", "crb_classical", "crb_quantum"],
    "plot": None,
}

# --- Sezione Parity check e stati GHZ ---

PARITY_TRADEOFF = {
    "description": "Errore totale del parity check con impulsi coerenti al variare di alpha.",
    "tags": ["errore totale del parity check", "alpha ottimale"],
    "params": {
        "alphas": param(FLOAT_LIST, [0.5, 1.0, 1.5, 2.0, 2.5, 3.0], help="Ampiezze coerenti"),
        "eta1": param(FLOAT, 0.01, help="Perdita del primo tratto"),
        "eta2": param(FLOAT, 0.01, help="Perdita del secondo tratto"),
    },
    "columns": ["alpha", "p_tot", "p_tot_approx", "alpha_opt"],
    "plot": {"x": "alpha", "y": ["p_tot", "p_tot_approx"], "logy": True},
}

GHZ_PREPARATION = {
    "description": "Fedelta' dello stato GHZ preparato con due parity check.",
    "tags": ["preparazione GHZ", "parity check Z1Z2 e Z2Z3"],
    "params": {
        "alphas": param(FLOAT_LIST, [1.0, 1.5, 2.0, 2.5, 3.0], help="Ampiezze coerenti"),
        "eta12": param(FLOAT, 0.01, help="Perdita del check Z1Z2"),
        "eta23": param(FLOAT, 0.01, help="Perdita del check Z2Z3"),
    },
    "columns": ["alpha", "fidelity", "error_probability"],
    "plot": {"x": "alpha", "y": ["fidelity"]},
}

FEASIBILITY = {
    "description": "Bilancio d'errore del parity check dispersivo con parametri sperimentali.",
    "tags": ["epsilon_reflect", "perdita interna", "errore di defasamento del qubit"],
    "params": {
        "chi": param(FLOAT, -2 * 3.141592653589793 * 1.05e6, help="chi (rad/s)"),
        "kappa_int": param(FLOAT, 2 * 3.141592653589793 * 0.22e6, help="Perdita interna (rad/s)"),
        "tau": param(FLOAT, 500e-9, help="Durata dell'impulso (s)"),
        "t2_star": param(FLOAT, 6e-6, help="T2* del qubit (s)"),
        "alpha": param(FLOAT, 1.0, help="Ampiezza coerente"),
    },
    "columns": ["epsilon_reflect", "epsilon_reflect_approx", "bandwidth_term",
                "internal_loss_term", "epsilon_qubit"],
    "plot": None,
}

# --- Sezione Stato tetraedro ---

TETRA_WITNESS = {
    "description": "Witness di entanglement della preparazione media di |T> con misure rumorose.",
    "tags": ["stato tetraedro", "witness a proiettore", "decodifica delle sindromi"],
    "params": {
        "q_values": param(FLOAT_LIST, [0.0, 0.01, 0.02, 0.05], help="Errori di misura q"),
        "p1": param(FLOAT, 0.0, help="Backaction E1"),
        "p2": param(FLOAT, 0.0, help="Backaction E2"),
    },
    "columns": ["q", "fidelity", "witness", "witness_two_setting", "witness_estimate"],
    "plot": {"x": "q", "y": ["witness", "witness_estimate"]},
}

TETRA_TELEPORT = {
    "description": "Teletrasporto controllato con |T>: fedelta' media di Haar con e senza Charlie.",
    "tags": ["teletrasporto controllato", "media di Haar", "correzioni di Bob e Charlie"],
    "params": {
        "samples": param(INT, 1000, 10000, help="Stati di Haar"),
        "cooperate": param(BOOL, False, help="Charlie coopera"),
    },
    "columns": ["samples", "cooperate", "mean_fidelity", "standard_error", "exact"],
    "plot": None,
}

# --- Sezione Porta CZ time-bin ---

TIMEBIN_BANDWIDTH = {
    "description": "Infedelta' della porta CZ time-bin al variare di kappa tau (Gamma = 0).",
    "tags": ["porta CZ time-bin", "scaling (kappa tau)^-2", "fedelta post-selezionata"],
    "params": {
        "kappa_tau": param(FLOAT_LIST, [10.0], [10.0, 20.0, 40.0, 60.0], help="Valori di kappa tau"),
        "kappa": param(FLOAT, 2 * 3.141592653589793 * 50e6, help="kappa (rad/s)"),
        "n_max": param(INT, 2, help="Troncamento delle cavita'"),
        "p_m": param(FLOAT, 0.0, help="Errore di misura dell'ancilla"),
    },
    "columns": ["kappa_tau", "epsilon", "success_probability"],
    "plot": {"x": "kappa_tau", "y": ["epsilon"], "logx": True, "logy": True},
}

TIMEBIN_SCALING = {
    "description": "Tau ottimale e infedelta' minima al variare di T1, con fit delle leggi di scala.",
    "tags": ["tau ottimale", "scaling con T1", "esponenti xi e zeta"],
    "params": {
        "t1_list": param(FLOAT_LIST, [1e-5, 3e-5, 1e-4, 3e-4], help="Valori di T1 (s)"),
        "tau_min": param(FLOAT, 2e-8, help="tau minimo della griglia (s)"),
        "tau_max": param(FLOAT, 2e-6, help="tau massimo della griglia (s)"),
        "tau_points": param(INT, 41, 9, help="Punti della griglia di tau"),
        "kappa": param(FLOAT, 2 * 3.141592653589793 * 50e6, help="kappa (rad/s)"),
        "model": param(STR, "two-term", "simulation", help="two-term oppure simulation"),
        "a_coef": param(FLOAT, 1.0, help="A del modello a due termini"),
        "b_coef": param(FLOAT, 1.0, help="B del modello a due termini"),
    },
    "columns": ["t1_s", "tau_opt_s", "eps_min", "xi_fit", "zeta_fit"],
    "plot": {"x": "t1_s", "y": ["eps_min"], "logx": True, "logy": True},
}

LOSS_BACKACTION = {
    "description": "Probabilita' di perdita q e coerenza C tra i bin in un bagno di TLS.",
    "tags": ["backaction della perdita", "bagno piatto", "bagno gaussiano", "TLS discreti"],
    "params": {
        "bath": param(STR, "gaussian", help="flat, gaussian oppure discrete"),
        "tau": param(FLOAT, 1.0, help="Larghezza dell'impulso"),
        "sep_over_tau": param(FLOAT_LIST, [0.5, 1.0, 2.0, 4.0, 8.0], help="tau_sep / tau"),
        "j0": param(FLOAT, 0.05, help="J0 del bagno piatto"),
        "g": param(FLOAT, 0.1, help="Accoppiamento del bagno gaussiano"),
        "width": param(FLOAT, 5.0, help="Larghezza Lambda del bagno gaussiano"),
        "detuning": param(FLOAT, 0.0, help="Detuning medio del bagno"),
        "n_tls": param(INT, 2000, 100000, help="Numero di TLS per la variante discreta"),
    },
    "columns": ["sep_over_tau", "q", "coherence_abs", "coherence_phase", "eta"],
    "plot": {"x": "sep_over_tau", "y": ["coherence_abs"]},
}


# --- Registro ---

REGISTRY = {
    "dispersive-phase": DISPERSIVE_PHASE,
    "vacuum-rabi": VACUUM_RABI,
    "qwp-concurrence": QWP_CONCURRENCE,
    "filter-function": FILTER_FUNCTION,
    "purcell-envelope": PURCELL_ENVELOPE,
    "fisher-sweep": FISHER_SWEEP,
    "mle-study": MLE_STUDY,
    "parity-tradeoff": PARITY_TRADEOFF,
    "ghz-preparation": GHZ_PREPARATION,
    "feasibility": FEASIBILITY,
    "tetra-witness": TETRA_WITNESS,
    "tetra-teleport": TETRA_TELEPORT,
    "timebin-bandwidth": TIMEBIN_BANDWIDTH,
    "timebin-scaling": TIMEBIN_SCALING,
    "loss-backaction": LOSS_BACKACTION,
}

# Flag della CLI comuni a tutti gli esperimenti, non sono parametri
RESERVED_FLAGS = ("config", "seed", "out", "fast", "full", "plot", "rtol", "atol", "workers")
