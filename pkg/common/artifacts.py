"""Report writers shared by every subcommand.

All reports are deterministic: identical inputs give byte-identical files.
Floats are printed with 9 significant digits so recount checks stay exact
across runs.
"""
import json
import math
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from . import __version__
from .errors import FormatError
from .logger import logger

TOOL_NAME = "edgecascade"
FLOAT_FORMAT = "%.9g"


def provenance(config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    return {
        "tool": TOOL_NAME,
        "version": __version__,
        "config": config or {},
    }


def round_sig(value: float) -> Optional[float]:
    if value is None or not math.isfinite(float(value)):
        return None
    return float(format(float(value), ".9g"))


def to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return round_sig(value)
    if isinstance(value, Path):
        return str(value)
    return value


def dumps_canonical(payload: Any) -> str:
    return json.dumps(to_jsonable(payload), sort_keys=True, separators=(",", ":"))


def write_json_report(path: Union[str, Path], payload: Dict[str, Any],
                      metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = dict(payload)
    document["metadata"] = metadata if metadata is not None else provenance()
    with open(path, "w", newline="\n") as f:
        json.dump(to_jsonable(document), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.debug(f"JSON report written to {path}")
    return path


def read_json_report(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, "r") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"Malformed JSON report {path}: {e}") from e


def write_csv_report(path: Union[str, Path], frame: pd.DataFrame,
                     metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metadata = metadata if metadata is not None else provenance()
    with open(path, "w", newline="\n") as f:
        for key in sorted(metadata):
            value = metadata[key]
            if isinstance(value, (dict, list, tuple)):
                value = dumps_canonical(value)
            f.write(f"# {key}: {value}\n")
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"CSV report written to {path} ({len(frame)} rows)")
    return path


def read_csv_report(path: Union[str, Path]) -> Tuple[Dict[str, str], pd.DataFrame]:
    metadata: Dict[str, str] = {}
    header_lines = 0
    with open(path, "r") as f:
        for line in f:
            if not line.startswith("# "):
                break
            header_lines += 1
            key, _, value = line[2:].rstrip("\n").partition(": ")
            metadata[key] = value
    frame = pd.read_csv(path, skiprows=header_lines, keep_default_na=False, na_values=[""])
    return metadata, frame
