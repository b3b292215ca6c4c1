import os
from dotenv import load_dotenv

dotenv_path = os.path.join(os.path.dirname(__file__), '.env')
if os.path.exists(dotenv_path):
    load_dotenv(dotenv_path)
else:
    print("Attenzione: file .env non trovato. Uso i valori di default per la configurazione.")

# Cartelle di output
OUTPUT_DIR = os.getenv("OUTPUT_DIR", "results")
PLOT_DIR = os.getenv("PLOT_DIR", os.path.join(OUTPUT_DIR, "plot"))

# Esecuzione degli esperimenti
DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", 0))
PRESET = os.getenv("PRESET", "fast")
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
MAX_WORKERS = int(os.getenv("MAX_WORKERS", os.cpu_count() or 1))

# Configurazione dell'integratore (Runge-Kutta 5(4))
ODE_RTOL = float(os.getenv("ODE_RTOL", 1e-8))
ODE_ATOL = float(os.getenv("ODE_ATOL", 1e-10))
ODE_MAX_STEP = float(os.getenv("ODE_MAX_STEP", "inf"))

# Pavimento relativo per i denominatori degli accoppiamenti lambda e dei drive
LAMBDA_FLOOR = float(os.getenv("LAMBDA_FLOOR", 1e-8))

# Troncamento delle cavita' per la porta CZ
NMAX_DEFAULT = int(os.getenv("NMAX_DEFAULT", 2))

LIBRARY_VERSION = "1.0.0"
