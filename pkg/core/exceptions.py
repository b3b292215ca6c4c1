# core/exceptions.py
from typing import Optional


class CqedError(Exception):
    """Errore base della libreria. Porta con se' il nome del modulo che ha fallito."""

    def __init__(self, message: str, module: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.module = module

    def __str__(self) -> str:
        if self.module:
            return f"[{self.module}] {self.message}"
        return self.message


class UsageError(CqedError):
    """Configurazione o precondizione non valida (codice di uscita 1)."""


class DimensionError(UsageError):
    """Dimensioni dei sottosistemi incompatibili."""


class NumericalFailure(CqedError):
    """Fallimento numerico: passo troppo piccolo, NaN, integrale divergente (codice di uscita 2)."""

    def __init__(self, message: str, module: Optional[str] = None, time: Optional[float] = None):
        super().__init__(message, module)
        self.time = time

    def __str__(self) -> str:
        base = super().__str__()
        if self.time is not None:
            return f"{base} (t = {self.time:.6e} s)"
        return base
