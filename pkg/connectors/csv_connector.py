import csv
import json
import logging
import os
from typing import Any, Dict

import numpy as np

from core.data_parser import DataParser, ResultTable
from core.exceptions import UsageError

logger = logging.getLogger(__name__)


class CsvConnector:
    """
    Unico componente che scrive su disco: CSV dei risultati e file JSON dei
    metadati accanto al CSV.
    """
    def __init__(self, output_dir: str):
        self.output_dir = output_dir
        try:
            os.makedirs(self.output_dir, exist_ok=True)
        except OSError as e:
            raise UsageError(f"Impossibile creare la cartella di output {output_dir}: {e}", "cli")

    def csv_path(self, name: str) -> str:
        return os.path.join(self.output_dir, f"{name}.csv")

    def metadata_path(self, name: str) -> str:
        return os.path.join(self.output_dir, f"{name}.meta.json")

    # --- METODI DI SCRITTURA ---
    def write_table(self, name: str, table: ResultTable) -> str:
        """Scrive header e righe; stessa tabella, stessi byte."""
        path = self.csv_path(name)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(table.columns)
            for row in table.rows:
                writer.writerow(DataParser.format_row(row))
        logger.info(f"Scritto {path} ({len(table.rows)} righe)")
        return path

    def write_metadata(self, name: str, metadata: Dict[str, Any]) -> str:
        path = self.metadata_path(name)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(metadata, f, indent=2, sort_keys=True, default=_to_json)
            f.write("\n")
        logger.debug(f"Metadati salvati in {path}")
        return path

    # --- METODI DI LETTURA ---
    def read_table(self, name: str) -> ResultTable:
        """Rilegge un CSV scritto da write_table (i metadati restano vuoti)."""
        path = self.csv_path(name)
        try:
            with open(path, encoding="utf-8", newline="") as f:
                reader = csv.reader(f)
                columns = next(reader)
                rows = [[float(v) for v in row] for row in reader if row]
        except (OSError, StopIteration, ValueError) as e:
            raise UsageError(f"CSV non leggibile {path}: {e}", "cli")
        return ResultTable(columns=columns, rows=rows)


def _to_json(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return str(value)
