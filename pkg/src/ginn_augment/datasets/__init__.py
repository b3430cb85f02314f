"""Bundled UCI benchmark tables (CSV + JSON schema sidecar per dataset).

``GINN_DATA_DIR`` points lookups at another directory with the same layout.
"""
import os
from pathlib import Path

BUILTIN = ("abalone", "heart", "ionosphere", "tic-tac-toe", "wine-quality-red")
ENV_VAR = "GINN_DATA_DIR"


def data_dir(override=None) -> Path:
    if override is not None:
        return Path(override)
    env = os.environ.get(ENV_VAR)
    return Path(env) if env else Path(__file__).resolve().parent


def resolve(name, override=None):
    """Return ``(csv_path, schema_path)`` for a dataset name."""
    root = data_dir(override)
    csv_path, schema_path = root / f"{name}.csv", root / f"{name}.schema.json"
    if not csv_path.exists() or not schema_path.exists():
        raise FileNotFoundError(f"dataset {name!r} not found in {root}")
    return csv_path, schema_path
