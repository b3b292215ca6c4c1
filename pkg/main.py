import argparse
import json
import logging
import sys
from typing import List, Optional

import config
from analysis.visualizer import create_experiment_report, create_registry_report
from core.data_parser import DataParser
from core.exceptions import CqedError, NumericalFailure, UsageError
from core.manager import ExperimentManager

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class CliParser(argparse.ArgumentParser):
    """ArgumentParser che trasforma gli errori di sintassi in UsageError."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}", "cli")


def build_parser() -> CliParser:
    """Costruisce il parser con i sotto-comandi `run` e `list`."""
    parser = CliParser(
        prog="cqed", allow_abbrev=False,
        description="Esperimenti numerici di cavity QED: tabelle CSV e grafici SVG.")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log di livello DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Esegue un esperimento del registro", allow_abbrev=False,
                         description="I parametri dell'esperimento si passano come --nome-parametro valore.")
    run.add_argument("experiment", help="Nome dell'esperimento (vedi 'list')")
    run.add_argument("--config", help="File di configurazione JSON")
    run.add_argument("--seed", type=int, help="Seed a 64 bit senza segno")
    run.add_argument("--out", help="Cartella di output")
    preset = run.add_mutually_exclusive_group()
    preset.add_argument("--fast", dest="preset", action="store_const", const="fast", help="Preset rapido")
    preset.add_argument("--full", dest="preset", action="store_const", const="full", help="Preset completo")
    run.add_argument("--plot", action="store_true", help="Salva anche il grafico SVG")
    run.add_argument("--rtol", type=float, help="Tolleranza relativa dell'integratore")
    run.add_argument("--atol", type=float, help="Tolleranza assoluta dell'integratore")
    run.add_argument("--workers", type=int, help="Numero di processi worker")

    listing = sub.add_parser("list", help="Elenca gli esperimenti e i loro parametri", allow_abbrev=False)
    listing.add_argument("--json", action="store_true", help="Registro in formato JSON")
    return parser


def handle_run(args: argparse.Namespace, extra: List[str]) -> int:
    flags = DataParser.parse_flag_tokens(extra)
    file_config = DataParser.load_config(args.config) if args.config else None
    tolerances = {k: v for k, v in (("rtol", args.rtol), ("atol", args.atol)) if v is not None}
    spec = DataParser.build_spec(args.experiment, flags=flags, config=file_config, seed=args.seed,
                                 output_dir=args.out, preset=args.preset, plot=args.plot,
                                 tolerances=tolerances, default_seed=config.DEFAULT_SEED,
                                 default_output=config.OUTPUT_DIR, default_preset=config.PRESET)
    manager = ExperimentManager(workers=args.workers)
    table = manager.run(spec)
    create_experiment_report(spec.name, table)
    return EXIT_OK


def handle_list(args: argparse.Namespace) -> int:
    schema = DataParser.registry_schema()
    if args.json:
        print(json.dumps(schema, indent=2))
    else:
        create_registry_report(schema)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Punto di ingresso della CLI. Restituisce il codice di uscita."""
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        level = logging.DEBUG if args.verbose else getattr(logging, config.LOG_LEVEL.upper(), logging.INFO)
        logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

        if args.command == "list":
            if extra:
                parser.error(f"argomenti non riconosciuti: {' '.join(extra)}")
            return handle_list(args)
        return handle_run(args, extra)
    except NumericalFailure as e:
        print(f"Errore nel modulo {e.module or 'sconosciuto'}: {e.message}", file=sys.stderr)
        if e.time is not None:
            print(f"   (istante t = {e.time:.6e} s)", file=sys.stderr)
        return EXIT_NUMERICAL
    except CqedError as e:
        print(f"Errore nel modulo {e.module or 'sconosciuto'}: {e.message}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("\nUscita richiesta dall'utente.")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
