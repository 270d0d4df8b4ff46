"""Atomic CSV / JSON writers; every artifact embeds the configuration that produced it."""

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

__all__ = (
    "atomic_write_text",
    "format_csv",
    "format_float",
    "to_jsonable",
    "write_csv",
    "write_json",
)


def format_float(value: float) -> str:
    if math.isnan(value):
        return ""
    return f"{value:.17g}"


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and dataclass-like records into plain JSON types."""
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) or math.isinf(value) else value
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    return value


def format_csv(
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    config: Optional[Mapping[str, Any]] = None,
) -> str:
    buffer = io.StringIO()
    if config is not None:
        buffer.write(f"# config: {json.dumps(to_jsonable(config), sort_keys=True)}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buffer.getvalue()


def atomic_write_text(path: Path, text: str) -> None:
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_file = tempfile.NamedTemporaryFile(
        mode="w",
        encoding="utf-8",
        dir=path.parent,
        prefix=f".{path.name}.",
        suffix=".tmp",
        delete=False,
    )
    try:
        with tmp_file:
            tmp_file.write(text)
        os.replace(tmp_file.name, path)
    except BaseException:
        Path(tmp_file.name).unlink(missing_ok=True)
        raise


def write_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    config: Optional[Mapping[str, Any]] = None,
) -> None:
    atomic_write_text(path, format_csv(header, rows, config))


def write_json(path: Path, payload: Any) -> None:
    text = json.dumps(to_jsonable(payload), indent=2, sort_keys=True, allow_nan=False)
    atomic_write_text(path, text + "\n")
