"""
Run-spec and report file helpers.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np

try:  # optional dependency
    import yaml  # type: ignore
except Exception:  # pragma: no cover - handled gracefully
    yaml = None

logger = logging.getLogger(__name__)


def load_run_spec(path: str | Path) -> Dict[str, Any]:
    """Read a JSON (or YAML when PyYAML is installed) run spec."""
    path = Path(path)
    ext = path.suffix.lower()
    text = path.read_text()
    if ext == ".json":
        data = json.loads(text)
    elif ext in {".yaml", ".yml"}:
        if yaml is None:
            raise ValueError("PyYAML is required to read YAML run specs")
        data = yaml.safe_load(text)
    else:
        raise ValueError(f"Unsupported file extension: {ext}")
    if not isinstance(data, dict):
        raise TypeError("run spec must be an object")
    logger.debug("loaded run spec %s", path)
    return data


def encode_array(values: np.ndarray) -> Dict[str, Any]:
    """Row-major ``{"shape", "data"}`` form; JSON floats round-trip exactly."""
    values = np.asarray(values, dtype=float)
    return {"shape": list(values.shape), "data": [float(v) for v in values.ravel(order="C")]}


def decode_array(obj: Dict[str, Any], *, name: str = "array") -> np.ndarray:
    shape = tuple(int(s) for s in obj["shape"])
    data = np.asarray(obj["data"], dtype=float)
    if data.size != int(np.prod(shape, dtype=int)):
        raise ValueError(f"{name}: {data.size} values do not fill shape {list(shape)}")
    return data.reshape(shape, order="C")


def write_output(data: Any, output: str | Path, *, default_name: str = "result.json") -> Path:
    """Write JSON to ``output``; a directory receives ``default_name``."""
    output_path = Path(output)
    if output_path.is_dir():
        output_path = output_path / default_name
    output_path.write_text(json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True))
    return output_path
