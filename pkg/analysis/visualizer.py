import logging
import os
from typing import Any, Dict, Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from core.data_parser import ResultTable

logger = logging.getLogger(__name__)

# Hash fisso negli SVG: stessi dati, stesso file
matplotlib.rcParams["svg.hashsalt"] = "cqed-toolkit"
matplotlib.rcParams["svg.fonttype"] = "none"


def plot_result_table(name: str, table: ResultTable, plot: Dict[str, Any], plot_dir: str,
                      title: Optional[str] = None) -> Optional[str]:
    """
    Genera e salva un grafico a linee (SVG statico) delle colonne di una tabella.

    Args:
        name: Nome dell'esperimento, usato per il file.
        table: La tabella dei risultati.
        plot: Voce "plot" del registro: {"x", "y", "logx", "logy"}.
        plot_dir: Cartella di destinazione.
        title: Titolo del grafico; di default il nome dell'esperimento.

    Returns:
        Il percorso del file salvato, oppure None se non c'e' nulla da disegnare.
    """
    if not table.rows:
        print("Nessun dato disponibile per il grafico.")
        return None

    x = np.asarray(table.column(plot["x"]))
    order = np.argsort(x, kind="stable")

    fig, ax = plt.subplots(figsize=(8, 5))
    for column in plot["y"]:
        y = np.asarray(table.column(column))
        # le scale logaritmiche non ammettono valori non positivi
        if plot.get("logy") and np.any(y[order] <= 0):
            logger.warning(f"Colonna {column} con valori non positivi: salto la serie in scala log.")
            continue
        ax.plot(x[order], y[order], marker="o", markersize=3, linewidth=1.2, label=column)

    if plot.get("logx") and np.all(x > 0):
        ax.set_xscale("log")
    if plot.get("logy") and ax.lines:
        ax.set_yscale("log")
    ax.set_xlabel(plot["x"])
    ax.set_title(title or name)
    ax.grid(True, alpha=0.3)
    if ax.lines:
        ax.legend()
    plt.tight_layout()

    try:
        os.makedirs(plot_dir, exist_ok=True)
        filename = os.path.join(plot_dir, f"{name}.svg")
        fig.savefig(filename, format="svg", metadata={"Date": None})
        print(f"\nGrafico salvato con successo come: {filename}")
        return filename
    except OSError as e:
        print(f"\nErrore durante il salvataggio del grafico: {e}")
        return None
    finally:
        plt.close(fig)


def create_experiment_report(name: str, table: ResultTable, max_rows: int = 12) -> None:
    """
    Stampa un report testuale di un'esecuzione: metadati principali, prime righe
    della tabella e avvisi.
    """
    meta = table.metadata
    print("\n" + "=" * 70)
    print(f"           REPORT ESPERIMENTO: {name}")
    print("=" * 70)

    print(f"\nESECUZIONE:")
    print(f"   • Seed: {meta.get('seed')}")
    print(f"   • Preset: {meta.get('preset')}")
    print(f"   • Versione libreria: {meta.get('version')}")
    if meta.get("csv"):
        print(f"   • CSV: {meta['csv']}")

    print(f"\nRISULTATI ({len(table.rows)} righe):")
    width = max(12, max(len(c) for c in table.columns))
    print("   " + " ".join(f"{c:>{width}}" for c in table.columns))
    for row in table.rows[:max_rows]:
        print("   " + " ".join(f"{v:>{width}.5g}" for v in row))
    if len(table.rows) > max_rows:
        print(f"   ... altre {len(table.rows) - max_rows} righe nel CSV")

    summary = meta.get("summary") or {}
    if summary:
        print(f"\nRIEPILOGO:")
        for key, value in summary.items():
            shown = f"{value:.6g}" if isinstance(value, float) else value
            print(f"   • {key}: {shown}")

    warnings = meta.get("warnings") or []
    if warnings:
        print(f"\nAVVISI:")
        for i, message in enumerate(warnings, 1):
            print(f"   {i}. {message}")

    print("\n" + "=" * 70)


def create_registry_report(schema: Dict[str, Any]) -> None:
    """Elenco leggibile degli esperimenti registrati con i loro parametri."""
    print("\n" + "=" * 70)
    print(f"           ESPERIMENTI DISPONIBILI ({len(schema)})")
    print("=" * 70)
    for name, entry in schema.items():
        print(f"\n{name}")
        print(f"   {entry['description']}")
        print(f"   Riferimenti: {'; '.join(entry['tags'])}")
        print(f"   Colonne: {', '.join(entry['columns'])}")
        for key, spec in entry["params"].items():
            flag = "--" + key.replace("_", "-")
            print(f"     {flag:<18} {spec['type']:<10} fast={spec['fast']!s:<14} {spec['help']}")
    print("\n" + "=" * 70)
