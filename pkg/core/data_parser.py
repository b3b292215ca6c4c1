# core/data_parser.py
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from core.exceptions import UsageError
from core.query import BOOL, FLOAT, FLOAT_LIST, INT, PARAM_TYPES, REGISTRY, RESERVED_FLAGS, STR

MODULE = "cli"

SEED_LIMIT = 2 ** 64
PRESETS = ("fast", "full")
CSV_DIGITS = 12


@dataclass
class ExperimentSpec:
    """Richiesta di esecuzione di un esperimento del registro, gia' validata."""
    name: str
    params: Dict[str, Any]
    seed: int
    output_dir: str
    preset: str = "fast"
    tolerances: Dict[str, float] = field(default_factory=dict)
    plot: bool = False


@dataclass
class ResultTable:
    """Tabella rettangolare di numeri finiti con i metadati dell'esecuzione."""
    columns: List[str]
    rows: List[List[float]]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        width = len(self.columns)
        for k, row in enumerate(self.rows):
            if len(row) != width:
                raise UsageError(f"Riga {k} con {len(row)} valori, attese {width} colonne.", MODULE)
            if not all(math.isfinite(float(v)) for v in row):
                raise UsageError(f"Riga {k} contiene valori non finiti: {row}", MODULE)

    def column(self, name: str) -> List[float]:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]


class DataParser:
    """
    Traduce file JSON e flag della riga di comando in un ExperimentSpec validato
    contro il registro, e formatta i valori per il CSV.
    """

    @staticmethod
    def load_config(path: str) -> Dict[str, Any]:
        """
        Legge un file di configurazione JSON (UTF-8).

        Il file puo' contenere direttamente i parametri oppure le chiavi
        "params", "seed", "out", "preset".
        """
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise UsageError(f"File di configurazione non trovato: {path}", MODULE)
        except json.JSONDecodeError as e:
            raise UsageError(f"JSON non valido in {path}: {e}", MODULE)
        if not isinstance(data, dict):
            raise UsageError("Il file di configurazione deve contenere un oggetto JSON.", MODULE)
        if "params" not in data:
            reserved = {"seed", "out", "preset", "tolerances"}
            data = {"params": {k: v for k, v in data.items() if k not in reserved},
                    **{k: v for k, v in data.items() if k in reserved}}
        return data

    @staticmethod
    def parse_flag_tokens(tokens: Sequence[str]) -> Dict[str, str]:
        """
        Trasforma ["--t1-list", "1e-5,3e-5", "--cooperate", "false"] in
        {"t1_list": "1e-5,3e-5", "cooperate": "false"}.
        """
        flags: Dict[str, str] = {}
        tokens = list(tokens)
        k = 0
        while k < len(tokens):
            token = tokens[k]
            if not token.startswith("--"):
                raise UsageError(f"Argomento inatteso '{token}'.", MODULE)
            name = token[2:]
            if "=" in name:
                name, value = name.split("=", 1)
            elif k + 1 < len(tokens) and not tokens[k + 1].startswith("--"):
                value = tokens[k + 1]
                k += 1
            else:
                # flag booleano senza valore
                value = "true"
            flags[name.replace("-", "_")] = value
            k += 1
        return flags

    @staticmethod
    def coerce(name: str, kind: str, value: Any) -> Any:
        """Converte un valore (stringa da flag o valore JSON) nel tipo dello schema."""
        try:
            if kind == FLOAT:
                result = float(value)
            elif kind == INT:
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError(value)
                result = int(value)
            elif kind == BOOL:
                if isinstance(value, bool):
                    result = value
                elif str(value).lower() in ("true", "1", "yes", "si"):
                    result = True
                elif str(value).lower() in ("false", "0", "no"):
                    result = False
                else:
                    raise ValueError(value)
            elif kind == STR:
                result = str(value)
            elif kind == FLOAT_LIST:
                items = value.split(",") if isinstance(value, str) else list(value)
                result = [float(v) for v in items if str(v).strip() != ""]
                if not result:
                    raise ValueError(value)
            else:
                raise UsageError(f"Tipo di parametro sconosciuto '{kind}' per {name}.", MODULE)
        except (TypeError, ValueError):
            raise UsageError(f"Valore non valido per '{name}' ({kind}): {value!r}", MODULE)

        values = result if isinstance(result, list) else [result]
        if kind in (FLOAT, FLOAT_LIST) and not all(math.isfinite(v) for v in values):
            raise UsageError(f"Il parametro '{name}' deve essere finito.", MODULE)
        return result

    @staticmethod
    def build_spec(name: str, flags: Optional[Dict[str, Any]] = None, config: Optional[Dict[str, Any]] = None,
                   seed: Optional[int] = None, output_dir: Optional[str] = None,
                   preset: Optional[str] = None, plot: bool = False,
                   tolerances: Optional[Dict[str, float]] = None,
                   default_seed: int = 0, default_output: str = "results",
                   default_preset: str = "fast") -> ExperimentSpec:
        """
        Costruisce lo spec combinando, in ordine di precedenza crescente, i
        default del preset, il file di configurazione e i flag.

        Raises:
            UsageError: esperimento o parametro sconosciuto, valore non valido, seed fuori intervallo.
        """
        if name not in REGISTRY:
            raise UsageError(f"Esperimento sconosciuto '{name}'. Usa 'list' per l'elenco.", MODULE)
        entry = REGISTRY[name]
        config = config or {}
        flags = flags or {}

        preset = preset or config.get("preset") or default_preset
        if preset not in PRESETS:
            raise UsageError(f"Preset sconosciuto '{preset}' (attesi: {', '.join(PRESETS)}).", MODULE)

        schema = entry["params"]
        supplied = dict(config.get("params", {}))
        supplied.update(flags)
        unknown = sorted(set(supplied) - set(schema))
        if unknown:
            raise UsageError(f"Parametri sconosciuti per '{name}': {', '.join(unknown)}", MODULE)

        params = {}
        for key, spec in schema.items():
            raw = supplied.get(key, spec[preset])
            params[key] = DataParser.coerce(key, spec["type"], raw)

        seed = seed if seed is not None else config.get("seed", default_seed)
        try:
            seed = int(seed)
        except (TypeError, ValueError):
            raise UsageError(f"Seed non valido: {seed!r}", MODULE)
        if not 0 <= seed < SEED_LIMIT:
            raise UsageError("Il seed deve essere un intero senza segno a 64 bit.", MODULE)

        merged_tolerances = dict(config.get("tolerances", {}))
        merged_tolerances.update(tolerances or {})
        for key, value in merged_tolerances.items():
            if key not in ("rtol", "atol"):
                raise UsageError(f"Tolleranza sconosciuta '{key}'.", MODULE)
            merged_tolerances[key] = DataParser.coerce(key, FLOAT, value)

        return ExperimentSpec(name=name, params=params, seed=seed,
                              output_dir=output_dir or config.get("out") or default_output,
                              preset=preset, tolerances=merged_tolerances, plot=plot)

    @staticmethod
    def format_value(value: float) -> str:
        """Notazione scientifica con 12 cifre significative."""
        return f"{float(value):.{CSV_DIGITS - 1}e}"

    @staticmethod
    def format_row(row: Sequence[float]) -> List[str]:
        return [DataParser.format_value(v) for v in row]

    @staticmethod
    def registry_schema() -> Dict[str, Any]:
        """Registro in forma serializzabile (lo stesso formato accettato dai file di configurazione)."""
        return {
            name: {
                "description": entry["description"],
                "tags": list(entry["tags"]),
                "columns": list(entry["columns"]),
                "params": {key: {"type": spec["type"], "fast": spec["fast"], "full": spec["full"],
                                 "help": spec["help"]}
                           for key, spec in entry["params"].items()},
            }
            for name, entry in REGISTRY.items()
        }

    @staticmethod
    def spec_to_config(spec: ExperimentSpec) -> Dict[str, Any]:
        """Spec in formato file di configurazione: rileggendolo si ottiene lo stesso spec."""
        return {"params": dict(spec.params), "seed": spec.seed, "out": spec.output_dir,
                "preset": spec.preset, "tolerances": dict(spec.tolerances)}


def check_registry():
    """Verifica i tipi dei parametri e che nessun parametro coincida con un flag della CLI."""
    for name, entry in REGISTRY.items():
        for key, spec in entry["params"].items():
            if spec["type"] not in PARAM_TYPES:
                raise UsageError(f"Tipo non valido per {name}.{key}", MODULE)
            if key in RESERVED_FLAGS:
                raise UsageError(f"Il parametro {name}.{key} coincide con un flag riservato.", MODULE)
